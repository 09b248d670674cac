// safecert command-line front end.
//
// Exit codes
//   reach          0 ok, 1 escaped the box or met U, 2 input error
//   certify        0 found, 1 unsafe-suspect, 3 inconclusive, 2 input error
//   synthesize     as certify, plus 1 when the barrier fails validation and
//                  4 when a construction stage fails
//   check-barrier  0 pass, 1 fail, 2 parse error
//   bench          0 when every benchmark gets its expected verdict, 1 otherwise

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "safecert/benchmarks.hpp"
#include "safecert/report.hpp"
#include "safecert/synthesis.hpp"

namespace fs = std::filesystem;
using namespace safecert;

namespace {

enum Exit { ok = 0, negative = 1, input_error = 2, inconclusive = 3, construction = 4 };

struct RunConfig {
    std::string problem_path;
    std::string bench;
    double eps = 0.1;
    double delta = 0.5;
    double t_max = 50.0;
    std::vector<std::size_t> grid;
    double clamp = 0.2;
    double kernel_width = 0.0;
    std::uint64_t seed = 0;
    std::string out = "safecert-out";
    std::size_t trials = 10000;
    double horizon = 5.0;
    std::string barrier;
    std::string certificate_path;
};

struct LoadedProblem {
    std::string name;
    SafetyProblem problem;
};

LoadedProblem load_problem(const RunConfig& cfg) {
    if (!cfg.bench.empty()) {
        const Benchmark* b = find_benchmark(cfg.bench);
        if (!b) throw Error("unknown benchmark '" + cfg.bench + "'");
        return {b->name, b->problem()};
    }
    if (cfg.problem_path.empty()) throw Error("one of --problem or --bench is required");
    std::ifstream in(cfg.problem_path);
    if (!in) throw Error("cannot open problem file " + cfg.problem_path);
    std::stringstream ss;
    ss << in.rdbuf();
    return {cfg.problem_path, parse_problem(ss.str())};
}

void validate(const RunConfig& cfg) {
    if (!(cfg.eps > 0.0)) throw Error("--eps must be positive");
    if (!(cfg.delta > 0.0)) throw Error("--delta must be positive");
    if (!(cfg.t_max >= cfg.delta)) throw Error("--tmax must be at least --delta");
    if (!(cfg.clamp > 0.0 && cfg.clamp < 0.5)) throw Error("--clamp must lie in (0, 0.5)");
    if (!(cfg.kernel_width >= 0.0)) throw Error("--kernel-width must be non-negative");
    if (!(cfg.horizon >= 0.0)) throw Error("--horizon must be non-negative");
    for (auto g : cfg.grid)
        if (g < 2) throw Error("--grid entries must be at least 2");
}

fs::path out_dir(const RunConfig& cfg) {
    fs::path d(cfg.out);
    fs::create_directories(d);
    return d;
}

void write_json(const fs::path& path, const Json& j) {
    std::ofstream os(path);
    os << j.dump(2) << '\n';
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
    std::ofstream os(path);
    fn(os);
}

Json config_json(const RunConfig& cfg, const std::string& command, const std::string& problem) {
    Json j;
    j["command"] = command;
    j["problem"] = problem;
    j["seed"] = cfg.seed;
    return j;
}

CertificateOptions certificate_options(const RunConfig& cfg) {
    CertificateOptions o;
    o.eps = cfg.eps;
    o.delta = cfg.delta;
    o.t_max = cfg.t_max;
    o.resolution = cfg.grid;
    o.seed = cfg.seed;
    return o;
}

int cmd_reach(const RunConfig& cfg) {
    const auto lp = load_problem(cfg);
    const auto& p = lp.problem;
    const auto geo = make_geometry(p, cfg.grid);
    ReachParams rp;
    rp.eps = cfg.eps;
    rp.sub_step = cfg.delta / 8.0;
    rp.lipschitz = std::max(lipschitz_estimate(p), 1e-3);
    const OccupancyGrid init = rasterize_set(p.init(), geo);
    const OccupancyGrid reach = reach_interval(init, p, rp, cfg.horizon);
    const bool meets_unsafe = !disjoint(reach, rasterize_set(p.unsafe(), geo));

    const auto dir = out_dir(cfg);
    write_file(dir / "reach_grid.csv", [&](std::ostream& os) { write_grid_csv(os, reach); });
    Json j = config_json(cfg, "reach", lp.name);
    j["eps"] = cfg.eps;
    j["horizon"] = cfg.horizon;
    j["sub_step"] = rp.sub_step;
    j["lipschitz"] = rp.lipschitz;
    j["resolution"] = to_json(geo->resolution());
    j["occupied_cells"] = reach.count();
    j["occupied_fraction"] = reach.occupied_fraction();
    j["escaped"] = reach.escaped();
    j["meets_unsafe"] = meets_unsafe;
    j["grid_csv"] = "reach_grid.csv";
    write_json(dir / "reach.json", j);
    std::cout << "reach: " << reach.count() << " cells, escaped=" << reach.escaped() << ", meets U=" << meets_unsafe << '\n';
    return reach.escaped() || meets_unsafe ? negative : ok;
}

int certify_exit(CertificateStatus s) {
    switch (s) {
        case CertificateStatus::found: return ok;
        case CertificateStatus::unsafe_suspect: return negative;
        case CertificateStatus::inconclusive: return inconclusive;
    }
    return inconclusive;
}

void write_certificate_artifacts(const fs::path& dir, const CertificateResult& r, Json& j) {
    if (r.certificate) {
        write_file(dir / "certificate.csv", [&](std::ostream& os) { write_grid_csv(os, *r.certificate); });
        j["certificate_csv"] = "certificate.csv";
    }
    if (r.witness) {
        write_file(dir / "witness.csv", [&](std::ostream& os) { write_trajectory_csv(os, *r.witness); });
        j["witness_csv"] = "witness.csv";
    }
}

int cmd_certify(const RunConfig& cfg) {
    const auto lp = load_problem(cfg);
    const auto& p = lp.problem;
    const CertificateResult r = search_certificate(p, certificate_options(cfg));
    const auto dir = out_dir(cfg);
    Json j = config_json(cfg, "certify", lp.name);
    j["result"] = to_json(r, p);
    if (r.certificate) {
        const auto rep = validate_certificate(*r.certificate, p, 0.5 * cfg.eps, cfg.delta, cfg.trials, cfg.seed, 8, r.lipschitz);
        j["validation"] = to_json(rep);
        j["validation"]["eps"] = 0.5 * cfg.eps;
    }
    if (r.reach) {
        write_file(dir / "reach_grid.csv", [&](std::ostream& os) { write_grid_csv(os, *r.reach); });
        j["reach_csv"] = "reach_grid.csv";
    }
    write_certificate_artifacts(dir, r, j);
    write_json(dir / "certify.json", j);
    std::cout << "certify: " << to_string(r.status) << " (" << r.reason << ")\n";
    return certify_exit(r.status);
}

OccupancyGrid load_certificate_grid(const RunConfig& cfg, const SafetyProblem& p) {
    std::ifstream in(cfg.certificate_path);
    if (!in) throw Error("cannot open certificate grid " + cfg.certificate_path);
    OccupancyGrid v = read_grid_csv(in);
    if (!(v.geometry().box() == p.domain())) throw Error("certificate grid domain does not match the problem");
    return v;
}

struct SynthesisRun {
    int code = ok;
    Json json;
};

SynthesisRun run_synthesis(const RunConfig& cfg, const LoadedProblem& lp, const fs::path* dir) {
    const auto& p = lp.problem;
    SynthesisOptions so;
    so.certificate = certificate_options(cfg);
    so.clamp = cfg.clamp;
    so.kernel_width = cfg.kernel_width;
    so.validation.seed = cfg.seed;
    so.validation.samples = cfg.trials;
    if (!cfg.certificate_path.empty()) so.given_certificate = load_certificate_grid(cfg, p);

    SynthesisRun run;
    Json& j = run.json;
    j = config_json(cfg, "synthesize", lp.name);
    j["clamp"] = cfg.clamp;
    try {
        const SynthesisResult r = synthesize_barrier(p, so);
        j["certificate"] = to_json(r.certificate, p);
        j["init_collar_cells"] = r.collar;
        if (dir) write_certificate_artifacts(*dir, r.certificate, j);
        if (r.certificate.status != CertificateStatus::found) {
            j["status"] = to_string(r.certificate.status);
            run.code = certify_exit(r.certificate.status);
            return run;
        }
        j["exit_time"] = to_json(*r.exit_time);
        Json m;
        m["kernel_width"] = *r.kernel_width;
        m["sup_error"] = *r.sup_error;
        m["sup_error_limit"] = 0.5 * cfg.clamp;
        m["min_lie"] = *r.min_lie;
        m["min_lie_limit"] = 1.0 - 0.5 * cfg.clamp;
        j["mollification"] = m;
        j["barrier"] = to_json(*r.report);
        const bool good = r.report->pass() && r.report->eps_b > 0.0;
        j["status"] = good ? "barrier-verified" : "barrier-rejected";
        if (dir) {
            write_file(*dir / "band.csv", [&](std::ostream& os) { write_band_csv(os, *r.field); });
            write_file(*dir / "barrier.csv", [&](std::ostream& os) { write_barrier_csv(os, *r.barrier, p, {}); });
            j["band_csv"] = "band.csv";
            j["barrier_csv"] = "barrier.csv";
        }
        run.code = good ? ok : negative;
    } catch (const ConstructionError& e) {
        j["status"] = "construction-failed";
        j["stage"] = e.stage();
        j["message"] = e.what();
        std::cerr << "synthesize: stage \"" << e.stage() << "\" failed: " << e.what() << '\n';
        run.code = construction;
    }
    return run;
}

int cmd_synthesize(const RunConfig& cfg) {
    const auto lp = load_problem(cfg);
    const auto dir = out_dir(cfg);
    auto run = run_synthesis(cfg, lp, &dir);
    write_json(dir / "synthesize.json", run.json);
    std::cout << "synthesize: " << run.json["status"].get<std::string>();
    if (run.json.contains("barrier")) std::cout << ", eps_b=" << run.json["barrier"]["eps_b"].get<double>();
    std::cout << '\n';
    return run.code;
}

int cmd_check_barrier(const RunConfig& cfg) {
    const auto lp = load_problem(cfg);
    const auto& p = lp.problem;
    if (cfg.barrier.empty()) throw Error("--barrier is required");
    AnalyticBarrier beta = AnalyticBarrier::parse(cfg.barrier, p.dim());
    BarrierValidationOptions vo;
    vo.seed = cfg.seed;
    vo.samples = cfg.trials;
    const BarrierReport rep = validate_barrier(beta, p, vo);
    const auto dir = out_dir(cfg);
    write_file(dir / "barrier.csv", [&](std::ostream& os) { write_barrier_csv(os, beta, p, {}); });
    Json j = config_json(cfg, "check-barrier", lp.name);
    j["barrier"] = cfg.barrier;
    j["parsed"] = to_string(beta.expression());
    j["report"] = to_json(rep);
    j["barrier_csv"] = "barrier.csv";
    write_json(dir / "check_barrier.json", j);
    if (rep.pass()) {
        std::cout << "check-barrier: pass, eps_b=" << rep.eps_b << '\n';
        return ok;
    }
    std::cout << "check-barrier: fail";
    const ConditionResult* conds[] = {&rep.init, &rep.lie, &rep.unsafe};
    for (int c : rep.failed_conditions()) {
        const auto& cr = *conds[c - 1];
        std::cout << "; condition " << c << " violated";
        if (cr.worst) std::cout << " at " << format_point(*cr.worst) << " (margin " << cr.margin << ")";
    }
    std::cout << '\n';
    return negative;
}

int cmd_bench(const RunConfig& cfg) {
    const auto dir = out_dir(cfg);
    Json j = config_json(cfg, "bench", cfg.bench.empty() ? "all" : cfg.bench);
    j["benchmarks"] = Json::array();
    bool all_good = true;
    for (const auto& b : list_benchmarks()) {
        if (!cfg.bench.empty() && b.name != cfg.bench) continue;
        RunConfig sub = cfg;
        sub.bench = b.name;
        const LoadedProblem lp{b.name, b.problem()};
        Json e;
        e["name"] = b.name;
        e["expected"] = b.verdict == Verdict::safe ? "safe" : "unsafe";
        bool good;
        if (b.verdict == Verdict::safe) {
            auto run = run_synthesis(sub, lp, nullptr);
            good = run.code == ok;
            e["synthesize"] = std::move(run.json);
        } else {
            const auto r = search_certificate(lp.problem, certificate_options(sub));
            good = r.status == CertificateStatus::unsafe_suspect && r.witness && is_confirmed_witness(lp.problem, *r.witness, r.eps);
            e["certify"] = to_json(r, lp.problem);
        }
        e["as_expected"] = good;
        all_good = all_good && good;
        std::cout << "bench " << b.name << ": " << (good ? "as expected" : "UNEXPECTED") << '\n';
        j["benchmarks"].push_back(std::move(e));
    }
    if (j["benchmarks"].empty()) throw Error("unknown benchmark '" + cfg.bench + "'");
    j["all_as_expected"] = all_good;
    write_json(dir / "bench.json", j);
    return all_good ? ok : negative;
}

std::vector<std::size_t> parse_grid(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != item.size()) throw Error("--grid expects N or N,N,...; got '" + s + "'");
        out.push_back(v);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Safety certificates and barrier functions for ODEs under bounded disturbances"};
    app.require_subcommand(1);
    RunConfig cfg;
    std::string grid;

    auto common = [&](CLI::App* c, bool problem = true) {
        if (problem) {
            auto* src = c->add_option_group("source");
            src->add_option("--problem", cfg.problem_path, "problem file");
            src->add_option("--bench", cfg.bench, "built-in benchmark name");
            src->require_option(1);
        }
        c->add_option("--eps", cfg.eps, "disturbance bound")->capture_default_str();
        c->add_option("--delta", cfg.delta, "certificate time step")->capture_default_str();
        c->add_option("--tmax", cfg.t_max, "search horizon")->capture_default_str();
        c->add_option("--grid", grid, "cells per axis: N or N,N,...");
        c->add_option("--clamp", cfg.clamp, "barrier clamp level delta")->capture_default_str();
        c->add_option("--kernel-width", cfg.kernel_width, "mollifier radius in state units (0: two cells)")->capture_default_str();
        c->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
        c->add_option("--out", cfg.out, "output directory")->capture_default_str();
        c->add_option("--trials", cfg.trials, "sampled trajectories / barrier samples")->capture_default_str();
    };

    auto* reach = app.add_subcommand("reach", "over-approximate the eps-perturbed reach set of I");
    common(reach);
    reach->add_option("--horizon", cfg.horizon, "reach horizon")->capture_default_str();
    auto* certify = app.add_subcommand("certify", "search for a finite-time robust safety certificate");
    common(certify);
    auto* synth = app.add_subcommand("synthesize", "build and validate a barrier function from a certificate");
    common(synth);
    synth->add_option("--certificate", cfg.certificate_path, "use this certificate grid CSV instead of searching");
    auto* check = app.add_subcommand("check-barrier", "validate a closed-form barrier function");
    common(check);
    check->add_option("--barrier", cfg.barrier, "barrier expression in x1..xn")->required();
    auto* bench = app.add_subcommand("bench", "run the built-in benchmark suite");
    common(bench, false);
    bench->add_option("--bench", cfg.bench, "restrict to one benchmark");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : input_error;
    }

    try {
        if (!grid.empty()) cfg.grid = parse_grid(grid);
        validate(cfg);
        if (*reach) return cmd_reach(cfg);
        if (*certify) return cmd_certify(cfg);
        if (*synth) return cmd_synthesize(cfg);
        if (*check) return cmd_check_barrier(cfg);
        if (*bench) return cmd_bench(cfg);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return input_error;
    } catch (const ConstructionError& e) {
        std::cerr << "construction error: " << e.what() << '\n';
        return construction;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return input_error;
    }
    return input_error;
}
