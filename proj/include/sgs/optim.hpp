#pragma once

#include "sgs/renderer.hpp"
#include "sgs/scene.hpp"

#include <vector>

namespace sgs {

// Adam moments for one flat parameter array. The timestep is shared by the
// whole group; per-row moments survive densify/prune via resize hooks.
struct AdamBuffer {
    std::vector<double> m, v;
    long long t = 0;

    void ensure(size_t n) {
        if (m.size() < n) {
            m.resize(n, 0.0);
            v.resize(n, 0.0);
        }
    }
    void step(double* values, const double* grads, size_t n, double lr, double beta1,
              double beta2, double eps);
    void remove_masked(const std::vector<bool>& mask, size_t stride);
    void append_zeros(size_t rows, size_t stride);
};

struct LearningRates {
    double position = 1.6e-4;
    double position_final = 1.6e-6; // exponential decay endpoint
    double opacity = 5e-2;
    double scale = 5e-3;
    double rotation = 1e-3;
    double color = 2.5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

// Position learning rate after `it` of `total` iterations (log-linear decay).
double position_lr(const LearningRates& rates, long long it, long long total);

// Per-group Adam state for one Gaussian field.
class FieldOptimizer {
public:
    // freeze_shape skips log_scales and rotations (the CPG freeze contract).
    void step(GaussianField& field, const GradientBundle& grads,
              const LearningRates& rates, double lr_position, bool freeze_shape);

    // Keep moment rows aligned with the field across density changes.
    void remove_masked(const std::vector<bool>& mask);
    void append_rows(size_t rows);
    size_t rows() const { return positions_.m.size() / 3; }

private:
    AdamBuffer positions_, log_scales_, rotations_, opacities_, colors_;
};

} // namespace sgs
