#include "sgs/optim.hpp"

#include <cmath>

namespace sgs {

void AdamBuffer::step(double* values, const double* grads, size_t n, double lr,
                      double beta1, double beta2, double eps) {
    ensure(n);
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void AdamBuffer::remove_masked(const std::vector<bool>& mask, size_t stride) {
    ensure(mask.size() * stride);
    size_t out = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) continue;
        for (size_t c = 0; c < stride; ++c) {
            m[out * stride + c] = m[i * stride + c];
            v[out * stride + c] = v[i * stride + c];
        }
        ++out;
    }
    m.resize(out * stride);
    v.resize(out * stride);
}

void AdamBuffer::append_zeros(size_t rows, size_t stride) {
    m.resize(m.size() + rows * stride, 0.0);
    v.resize(v.size() + rows * stride, 0.0);
}

double position_lr(const LearningRates& rates, long long it, long long total) {
    if (total <= 1) return rates.position;
    const double frac = std::clamp(static_cast<double>(it) / static_cast<double>(total - 1),
                                   0.0, 1.0);
    return rates.position * std::pow(rates.position_final / rates.position, frac);
}

namespace {

// Vec3/Vec4 arrays are contiguous fixed-size Eigen types; treat as flat.
template <typename V>
double* flat(std::vector<V>& v) {
    return v.empty() ? nullptr : v[0].data();
}
template <typename V>
const double* flat(const std::vector<V>& v) {
    return v.empty() ? nullptr : v[0].data();
}

} // namespace

void FieldOptimizer::step(GaussianField& field, const GradientBundle& grads,
                          const LearningRates& rates, double lr_position,
                          bool freeze_shape) {
    const size_t n = field.count();
    positions_.step(flat(field.positions), flat(grads.positions), n * 3, lr_position,
                    rates.beta1, rates.beta2, rates.eps);
    opacities_.step(field.opacity_logits.data(), grads.opacity_logits.data(), n,
                    rates.opacity, rates.beta1, rates.beta2, rates.eps);
    colors_.step(flat(field.colors), flat(grads.colors), n * 3, rates.color, rates.beta1,
                 rates.beta2, rates.eps);
    if (!freeze_shape) {
        log_scales_.step(flat(field.log_scales), flat(grads.log_scales), n * 3,
                         rates.scale, rates.beta1, rates.beta2, rates.eps);
        rotations_.step(flat(field.rotations), flat(grads.rotations), n * 4,
                        rates.rotation, rates.beta1, rates.beta2, rates.eps);
        field.renormalize_rotations();
    }
    ++field.mutation_counter;
}

void FieldOptimizer::remove_masked(const std::vector<bool>& mask) {
    positions_.remove_masked(mask, 3);
    log_scales_.remove_masked(mask, 3);
    rotations_.remove_masked(mask, 4);
    opacities_.remove_masked(mask, 1);
    colors_.remove_masked(mask, 3);
}

void FieldOptimizer::append_rows(size_t rows) {
    positions_.append_zeros(rows, 3);
    log_scales_.append_zeros(rows, 3);
    rotations_.append_zeros(rows, 4);
    opacities_.append_zeros(rows, 1);
    colors_.append_zeros(rows, 3);
}

} // namespace sgs
