#pragma once

#include "sgs/scene.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace sgs {

enum class EnsemblePhase { Mutual, PostFreeze };

// Three independently supervised fields over the same scene. The primary
// field is the deliverable; the auxiliaries act as geometric references and
// have their shape parameters frozen partway through training.
struct FieldEnsemble {
    GaussianField primary;
    GaussianField aux1;
    GaussianField aux2;
    EnsemblePhase phase = EnsemblePhase::Mutual;

    // Byte images of the auxiliaries' frozen parameter groups, captured at
    // the moment of freezing.
    std::vector<uint8_t> frozen_snapshot;

    GaussianField& field(int i) { return i == 0 ? primary : i == 1 ? aux1 : aux2; }
    const GaussianField& field(int i) const {
        return i == 0 ? primary : i == 1 ? aux1 : aux2;
    }
};

// mask[y] = true iff the nearest target splat is farther than delta from
// source splat y. Uses the spatial index; agrees exactly with brute force.
std::vector<bool> coprune_mask(const GaussianField& source, const GaussianField& target,
                               double delta);

struct CopruneReport {
    std::array<size_t, 3> removed = {0, 0, 0}; // primary, aux1, aux2
    // The masks actually applied (empty for untouched fields), so callers can
    // keep side structures such as optimizer moments aligned.
    std::array<std::vector<bool>, 3> masks;
};

// Mutual phase: every field is checked against both others on pre-prune
// snapshots; a splat flagged against either peer is removed. All removals
// apply simultaneously, so the result is order independent.
CopruneReport mutual_coprune(FieldEnsemble& ensemble, double delta);

// Captures the auxiliaries' log_scales and rotations and switches the
// ensemble to the post-freeze phase.
void freeze_auxiliaries(FieldEnsemble& ensemble);

// Post-freeze phase: prunes primary splats inconsistent with the references.
// OR aggregation (default) removes a splat flagged against either auxiliary;
// AND removes only splats flagged against both.
CopruneReport unilateral_coprune(FieldEnsemble& ensemble, double delta,
                                 bool require_both = false);

// Serialized bytes of one field's log_scales and rotations, for freeze
// verification.
std::vector<uint8_t> shape_parameter_bytes(const GaussianField& field);

// True iff both auxiliaries' shape parameters still match the freeze
// snapshot byte for byte.
bool frozen_parameters_intact(const FieldEnsemble& ensemble);

// The distance threshold is quoted for a scene whose camera-position
// bounding box has unit diagonal; scale it by the actual diagonal.
double scaled_delta(double delta, const std::vector<Camera>& cameras);

} // namespace sgs
