#pragma once

// Certificate -> exit time -> mollified exit time -> saturated barrier ->
// validation, with the clamp level's side conditions checked in between.

#include <cmath>
#include <optional>
#include <string>

#include "safecert/barrier.hpp"
#include "safecert/certificate.hpp"
#include "safecert/exit_time.hpp"

namespace safecert {

struct SynthesisOptions {
    CertificateOptions certificate;  // init_dilation is overridden unless `collar` is set
    double clamp = 0.2;              // delta, the saturation level of beta
    double kernel_width = 0.0;  // mollifier radius in state units; 0 means two cells
    std::size_t band_width = 8;
    double membership_smoothing = 5.0;  // cells
    std::optional<std::size_t> collar;  // rasterized-I dilation; derived from clamp when unset
    BarrierValidationOptions validation;
    /// Use this grid as V instead of running the certificate search.
    std::optional<OccupancyGrid> given_certificate;
};

struct SynthesisResult {
    CertificateResult certificate;
    std::size_t collar = 0;
    std::optional<ExitTimeDiagnostics> exit_time;
    std::optional<double> sup_error;
    std::optional<double> min_lie;
    std::optional<double> kernel_width;
    std::optional<BarrierReport> report;
    std::optional<AssembledBarrier> barrier;
    std::optional<ExitTimeField> field;
};

/// Cells of dilation that keep the backward flow of I inside V for time
/// delta: |phi(x, -t) - x| <= t e^{L t} max|f| on I.
inline std::size_t clamp_collar(const SafetyProblem& p, const GridGeometry& g, double delta, double lipschitz,
                                double smoothing_cells) {
    const OccupancyGrid init = rasterize_set(p.init(), g);
    double vmax = 0.0;
    for (std::size_t c : init.occupied()) vmax = std::max(vmax, norm(p.eval_field(g.cell_center(c))) + lipschitz * g.half_diagonal());
    const double reach = delta * std::exp(lipschitz * delta) * vmax;
    return static_cast<std::size_t>(std::ceil(reach / g.min_cell_width() + smoothing_cells)) + 1;
}

/// Runs the whole construction. Structural failures throw ConstructionError
/// naming the stage; a non-found certificate returns early with the status.
inline SynthesisResult synthesize_barrier(const SafetyProblem& p, SynthesisOptions opt) {
    if (!(opt.clamp > 0.0 && opt.clamp < 0.5)) throw Error("synthesize: clamp level must lie in (0, 1/2)");
    if (!(opt.kernel_width >= 0.0)) throw Error("synthesize: kernel width must be non-negative");
    SynthesisResult res;

    if (opt.given_certificate) {
        res.certificate.status = CertificateStatus::found;
        res.certificate.certificate = *opt.given_certificate;
        res.certificate.eps = opt.certificate.eps;
        res.certificate.delta = opt.certificate.delta;
        res.certificate.reason = "certificate supplied by the caller";
    } else {
        const auto geo = make_geometry(p, opt.certificate.resolution);
        const double lip = std::max(opt.certificate.lipschitz.value_or(lipschitz_estimate(p)), 1e-3);
        res.collar = opt.collar.value_or(clamp_collar(p, *geo, opt.clamp, lip, opt.membership_smoothing));
        opt.certificate.init_dilation = res.collar;
        opt.certificate.lipschitz = lip;
        res.certificate = search_certificate(p, opt.certificate);
        if (res.certificate.status != CertificateStatus::found) return res;
    }
    const OccupancyGrid& v = *res.certificate.certificate;
    const auto& g = v.geometry();

    BandOptions band;
    band.width = opt.band_width;
    band.grow_below = 2.0 * opt.clamp;
    band.smoothing = opt.membership_smoothing;
    CrossingOptions cross;
    cross.t_search = 4.0 * opt.certificate.delta;
    ExitTimeField field = build_band_field(p, v, band, cross);
    res.exit_time = field.diagnostics();

    // N_delta must avoid I and U.
    const OccupancyGrid init = rasterize_set(p.init(), v.geometry_ptr());
    const OccupancyGrid unsafe = rasterize_set(p.unsafe(), v.geometry_ptr());
    for (std::size_t c : field.band().cells) {
        if (!field.defined(c)) continue;
        const double nu = field.at(c);
        if ((init[c] && nu <= opt.clamp) || (unsafe[c] && nu >= -opt.clamp))
            throw ConstructionError("clamp-level side conditions",
                                    std::string("|nu| <= delta on ") + (init[c] ? "I" : "U") + " at " +
                                        format_point(g.cell_center(c)) + "; lower the clamp level");
    }

    MollifyOptions mo;
    mo.width = opt.kernel_width;
    mo.delta = opt.clamp;
    MollifyResult m = mollify_field(field, p, mo);
    res.sup_error = m.sup_error;
    res.min_lie = m.min_lie;
    res.kernel_width = m.width;

    AssembledBarrier beta = assemble_barrier(m.field, field.membership(), opt.clamp);
    res.report = validate_barrier(beta, p, opt.validation);
    res.barrier = std::move(beta);
    res.field = std::move(field);
    return res;
}

}  // namespace safecert
