#include "sgs/cpg.hpp"

#include <cstring>

namespace sgs {

std::vector<bool> coprune_mask(const GaussianField& source, const GaussianField& target,
                               double delta) {
    if (target.count() == 0) throw EmptyTarget();
    const SpatialIndex index(target.positions);
    std::vector<bool> mask(source.count(), false);
    for (size_t y = 0; y < source.count(); ++y)
        mask[y] = index.nearest_distance(source.positions[y]) > delta;
    return mask;
}

namespace {

void apply_or_collapse(GaussianField& field, const std::vector<bool>& mask,
                       size_t& removed) {
    size_t flagged = 0;
    for (bool b : mask) flagged += b;
    if (flagged == field.count())
        throw EnsembleCollapse();
    field.remove_masked(mask);
    removed = flagged;
}

} // namespace

CopruneReport mutual_coprune(FieldEnsemble& ensemble, double delta) {
    if (ensemble.phase != EnsemblePhase::Mutual)
        throw Error("mutual co-pruning requires the mutual phase");

    // Masks are computed against pre-prune snapshots of all three fields,
    // then applied together, so pair order cannot matter.
    std::array<std::vector<bool>, 3> masks;
    for (int i = 0; i < 3; ++i) {
        const GaussianField& src = ensemble.field(i);
        masks[i].assign(src.count(), false);
        for (int j = 0; j < 3; ++j) {
            if (j == i) continue;
            const std::vector<bool> m = coprune_mask(src, ensemble.field(j), delta);
            for (size_t y = 0; y < m.size(); ++y)
                masks[i][y] = masks[i][y] || m[y];
        }
    }
    // Validate every field before mutating any, so a collapse aborts cleanly.
    for (int i = 0; i < 3; ++i) {
        size_t flagged = 0;
        for (bool b : masks[i]) flagged += b;
        if (flagged == ensemble.field(i).count() && flagged > 0) throw EnsembleCollapse();
    }
    CopruneReport report;
    for (int i = 0; i < 3; ++i)
        apply_or_collapse(ensemble.field(i), masks[i], report.removed[i]);
    report.masks = std::move(masks);
    return report;
}

std::vector<uint8_t> shape_parameter_bytes(const GaussianField& field) {
    std::vector<uint8_t> bytes;
    bytes.reserve(field.count() * 7 * sizeof(double));
    auto append = [&](const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    };
    for (const Vec3& s : field.log_scales) append(s.data(), 3 * sizeof(double));
    for (const Vec4& q : field.rotations) append(q.data(), 4 * sizeof(double));
    return bytes;
}

void freeze_auxiliaries(FieldEnsemble& ensemble) {
    if (ensemble.phase == EnsemblePhase::PostFreeze) throw AlreadyFrozen();
    ensemble.frozen_snapshot = shape_parameter_bytes(ensemble.aux1);
    const std::vector<uint8_t> aux2 = shape_parameter_bytes(ensemble.aux2);
    ensemble.frozen_snapshot.insert(ensemble.frozen_snapshot.end(), aux2.begin(),
                                    aux2.end());
    ensemble.phase = EnsemblePhase::PostFreeze;
}

bool frozen_parameters_intact(const FieldEnsemble& ensemble) {
    if (ensemble.phase != EnsemblePhase::PostFreeze) return false;
    std::vector<uint8_t> now = shape_parameter_bytes(ensemble.aux1);
    const std::vector<uint8_t> aux2 = shape_parameter_bytes(ensemble.aux2);
    now.insert(now.end(), aux2.begin(), aux2.end());
    return now == ensemble.frozen_snapshot;
}

CopruneReport unilateral_coprune(FieldEnsemble& ensemble, double delta,
                                 bool require_both) {
    if (ensemble.phase != EnsemblePhase::PostFreeze)
        throw Error("unilateral co-pruning requires the post-freeze phase");
    const std::vector<bool> m1 = coprune_mask(ensemble.primary, ensemble.aux1, delta);
    const std::vector<bool> m2 = coprune_mask(ensemble.primary, ensemble.aux2, delta);
    std::vector<bool> mask(m1.size());
    for (size_t y = 0; y < mask.size(); ++y)
        mask[y] = require_both ? (m1[y] && m2[y]) : (m1[y] || m2[y]);
    CopruneReport report;
    apply_or_collapse(ensemble.primary, mask, report.removed[0]);
    report.masks[0] = std::move(mask);
    return report;
}

double scaled_delta(double delta, const std::vector<Camera>& cameras) {
    if (cameras.empty()) return delta;
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
    Vec3 hi = Vec3::Constant(std::numeric_limits<double>::lowest());
    for (const Camera& cam : cameras) {
        // Camera position in world space: -Rᵀ t.
        const Vec3 eye = -(quat_to_matrix(cam.rotation).transpose() * cam.translation);
        lo = lo.cwiseMin(eye);
        hi = hi.cwiseMax(eye);
    }
    return delta * (hi - lo).norm();
}

} // namespace sgs
