#pragma once

// JSON views of the result types. Key order is fixed (ordered_json) and no
// wall-clock data is included, so equal inputs give byte-identical reports.

#include <nlohmann/json.hpp>

#include "safecert/barrier.hpp"
#include "safecert/certificate.hpp"
#include "safecert/exit_time.hpp"
#include "safecert/synthesis.hpp"

namespace safecert {

using Json = nlohmann::ordered_json;

inline Json to_json(const State& x) {
    Json a = Json::array();
    for (std::size_t i = 0; i < x.size(); ++i) a.push_back(x[i]);
    return a;
}

inline Json to_json(const std::vector<std::size_t>& v) {
    Json a = Json::array();
    for (auto x : v) a.push_back(x);
    return a;
}

inline Json to_json(const ConditionResult& c) {
    Json j;
    j["holds"] = c.holds();
    if (c.vacuous)
        j["margin"] = nullptr;
    else
        j["margin"] = c.margin;
    j["worst_point"] = c.worst ? to_json(*c.worst) : Json(nullptr);
    j["points"] = c.points;
    return j;
}

inline Json to_json(const BarrierReport& r) {
    Json j;
    j["pass"] = r.pass();
    j["failed_conditions"] = Json::array();
    for (int c : r.failed_conditions()) j["failed_conditions"].push_back(c);
    j["condition_1_init"] = to_json(r.init);
    j["condition_2_lie_at_zero_set"] = to_json(r.lie);
    j["condition_3_unsafe"] = to_json(r.unsafe);
    j["eps_b"] = r.eps_b;
    j["sweep_points"] = r.sweep_points;
    j["samples"] = r.samples;
    return j;
}

inline Json to_json(const CertificateReport& r) {
    Json j;
    j["pass"] = r.pass();
    j["init_subset"] = r.init_subset;
    j["delta_invariant"] = r.delta_invariant();
    j["delta_invariant_grid"] = r.delta_invariant_grid;
    j["trials"] = r.trials;
    j["violations"] = r.violations;
    j["unsafe_disjoint"] = r.unsafe_disjoint;
    return j;
}

inline Json to_json(const CertificateResult& r, const SafetyProblem& p) {
    Json j;
    j["status"] = to_string(r.status);
    j["reason"] = r.reason;
    j["eps"] = r.eps;
    j["delta"] = r.delta;
    j["lipschitz"] = r.lipschitz;
    j["t_reached"] = r.t_reached;
    if (r.status == CertificateStatus::found) j["t_found"] = r.t_found;
    if (r.certificate) {
        j["resolution"] = to_json(r.certificate->geometry().resolution());
        j["certificate_cells"] = r.certificate->count();
    }
    if (r.reach) j["reach_cells"] = r.reach->count();
    if (r.witness) {
        Json w;
        w["states"] = r.witness->states.size();
        w["final_time"] = r.witness->times.back();
        w["final_state"] = to_json(r.witness->final_state());
        w["final_state_unsafe"] = p.unsafe()(r.witness->final_state());
        w["confirmed"] = is_confirmed_witness(p, *r.witness, r.eps);
        j["witness"] = w;
    }
    return j;
}

inline Json to_json(const ExitTimeDiagnostics& d) {
    Json j;
    j["band_cells"] = d.band_cells;
    j["undefined_cells"] = d.undefined;
    j["sign_violations"] = d.sign_violations;
    j["cells_with_extra_crossings"] = d.extra_crossings;
    j["extra_crossing_points"] = Json::array();
    for (const auto& x : d.extra_crossing_points) j["extra_crossing_points"].push_back(to_json(x));
    j["min_speed"] = d.min_speed;
    j["max_adjacent_jump"] = d.max_adjacent_jump;
    j["jump_bound"] = d.jump_bound;
    j["continuity_suspect"] = d.continuity_suspect;
    return j;
}

}  // namespace safecert
