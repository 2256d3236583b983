#include "sgs/losses.hpp"

#include "sgs/errors.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace sgs {

double l1_loss(const Image& a, const Image& b) {
    a.require_same_shape(b);
    double sum = 0;
    for (size_t i = 0; i < a.data.size(); ++i) sum += std::abs(a.data[i] - b.data[i]);
    return sum / a.data.size();
}

Image l1_loss_backward(const Image& a, const Image& b, double upstream) {
    a.require_same_shape(b);
    Image g(a.width, a.height, a.channels);
    const double scale = upstream / a.data.size();
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        g.data[i] = d > 0 ? scale : (d < 0 ? -scale : 0.0);
    }
    return g;
}

namespace {

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin>& gauss_window() {
    static const std::array<double, kWin> w = [] {
        std::array<double, kWin> v{};
        const double sigma = 1.5;
        double sum = 0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - (kWin - 1) / 2.0;
            v[i] = std::exp(-d * d / (2 * sigma * sigma));
            sum += v[i];
        }
        for (double& x : v) x /= sum;
        return v;
    }();
    return w;
}

// Single-channel plane helpers (row-major w x h doubles).
struct Plane {
    int w = 0, h = 0;
    std::vector<double> v;
    Plane() = default;
    Plane(int w_, int h_) : w(w_), h(h_), v(static_cast<size_t>(w_) * h_, 0.0) {}
    double& at(int x, int y) { return v[static_cast<size_t>(y) * w + x]; }
    double at(int x, int y) const { return v[static_cast<size_t>(y) * w + x]; }
};

// Separable valid correlation: output (w-10) x (h-10).
Plane conv_valid(const Plane& in) {
    const auto& k = gauss_window();
    Plane tmp(in.w - kWin + 1, in.h);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < tmp.w; ++x) {
            double s = 0;
            for (int i = 0; i < kWin; ++i) s += k[i] * in.at(x + i, y);
            tmp.at(x, y) = s;
        }
    Plane out(tmp.w, in.h - kWin + 1);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            double s = 0;
            for (int i = 0; i < kWin; ++i) s += k[i] * tmp.at(x, y + i);
            out.at(x, y) = s;
        }
    return out;
}

// Adjoint of conv_valid: scatters a valid-size map back to full size.
Plane conv_full(const Plane& in, int full_w, int full_h) {
    const auto& k = gauss_window();
    Plane tmp(in.w, full_h);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            const double val = in.at(x, y);
            if (val == 0) continue;
            for (int i = 0; i < kWin; ++i) tmp.at(x, y + i) += k[i] * val;
        }
    Plane out(full_w, full_h);
    for (int y = 0; y < full_h; ++y)
        for (int x = 0; x < in.w; ++x) {
            const double val = tmp.at(x, y);
            if (val == 0) continue;
            for (int i = 0; i < kWin; ++i) out.at(x + i, y) += k[i] * val;
        }
    return out;
}

Plane channel_plane(const Image& img, int c) {
    Plane p(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) p.at(x, y) = img.at(x, y, c);
    return p;
}

} // namespace

double ssim_with_grad(const Image& a, const Image& b, double upstream, Image* grad_a) {
    a.require_same_shape(b);
    if (a.width < kWin || a.height < kWin) throw ImageTooSmall();

    if (grad_a) *grad_a = Image(a.width, a.height, a.channels);

    const int vw = a.width - kWin + 1, vh = a.height - kWin + 1;
    const double inv_count =
        1.0 / (static_cast<double>(vw) * vh * a.channels);

    double total = 0;
    for (int c = 0; c < a.channels; ++c) {
        const Plane pa = channel_plane(a, c);
        const Plane pb = channel_plane(b, c);
        Plane paa(a.width, a.height), pbb(a.width, a.height), pab(a.width, a.height);
        for (size_t i = 0; i < pa.v.size(); ++i) {
            paa.v[i] = pa.v[i] * pa.v[i];
            pbb.v[i] = pb.v[i] * pb.v[i];
            pab.v[i] = pa.v[i] * pb.v[i];
        }
        const Plane mu_a = conv_valid(pa), mu_b = conv_valid(pb);
        const Plane m_aa = conv_valid(paa), m_bb = conv_valid(pbb), m_ab = conv_valid(pab);

        Plane g_mu(vw, vh), g_paa(vw, vh), g_pab(vw, vh);
        for (int y = 0; y < vh; ++y) {
            for (int x = 0; x < vw; ++x) {
                const double ma = mu_a.at(x, y), mb = mu_b.at(x, y);
                const double va = m_aa.at(x, y) - ma * ma;
                const double vb = m_bb.at(x, y) - mb * mb;
                const double cov = m_ab.at(x, y) - ma * mb;
                const double A1 = 2 * ma * mb + kC1, A2 = 2 * cov + kC2;
                const double B1 = ma * ma + mb * mb + kC1, B2 = va + vb + kC2;
                const double s = (A1 * A2) / (B1 * B2);
                total += s;
                if (!grad_a) continue;
                const double ds_dmu = 2 * (mb * A2 * B1 - ma * A1 * A2) / (B1 * B1 * B2);
                const double ds_dva = -A1 * A2 / (B1 * B2 * B2);
                const double ds_dcov = 2 * A1 / (B1 * B2);
                g_mu.at(x, y) = ds_dmu + ds_dva * (-2 * ma) + ds_dcov * (-mb);
                g_paa.at(x, y) = ds_dva;
                g_pab.at(x, y) = ds_dcov;
            }
        }
        if (grad_a) {
            const Plane back_mu = conv_full(g_mu, a.width, a.height);
            const Plane back_paa = conv_full(g_paa, a.width, a.height);
            const Plane back_pab = conv_full(g_pab, a.width, a.height);
            const double scale = upstream * inv_count;
            for (int y = 0; y < a.height; ++y)
                for (int x = 0; x < a.width; ++x)
                    grad_a->at(x, y, c) =
                        scale * (back_mu.at(x, y) + 2 * pa.at(x, y) * back_paa.at(x, y) +
                                 pb.at(x, y) * back_pab.at(x, y));
        }
    }
    return total * inv_count;
}

double ssim(const Image& a, const Image& b) { return ssim_with_grad(a, b, 0.0, nullptr); }

double dssim_loss(const Image& a, const Image& b) { return (1.0 - ssim(a, b)) / 2.0; }

double dssim_loss_with_grad(const Image& a, const Image& b, double upstream,
                            Image* grad_a) {
    const double s = ssim_with_grad(a, b, -0.5 * upstream, grad_a);
    return (1.0 - s) / 2.0;
}

namespace {

struct PearsonStats {
    std::vector<size_t> valid;
    double mean_x = 0, mean_y = 0, vx = 0, vy = 0, cxy = 0;
    double denom = 0, r = 0;
};

constexpr double kVarFloor = 1e-8;

PearsonStats pearson_stats(const Image& reference, const Image& rendered,
                           const Image& alpha) {
    reference.require_same_shape(rendered);
    if (alpha.width != reference.width || alpha.height != reference.height)
        throw ShapeMismatch();
    PearsonStats st;
    for (size_t i = 0; i < alpha.data.size(); ++i)
        if (alpha.data[i] > 0.5) st.valid.push_back(i);
    if (st.valid.size() < 16) throw InsufficientCoverage();

    const double n = static_cast<double>(st.valid.size());
    for (size_t i : st.valid) {
        st.mean_x += reference.data[i];
        st.mean_y += rendered.data[i];
    }
    st.mean_x /= n;
    st.mean_y /= n;
    for (size_t i : st.valid) {
        const double x = reference.data[i] - st.mean_x;
        const double y = rendered.data[i] - st.mean_y;
        st.vx += x * x;
        st.vy += y * y;
        st.cxy += x * y;
    }
    st.vx /= n;
    st.vy /= n;
    st.cxy /= n;
    st.denom = std::sqrt(std::max(st.vx, kVarFloor) * std::max(st.vy, kVarFloor));
    st.r = st.cxy / st.denom;
    return st;
}

} // namespace

double pearson_depth_loss(const Image& reference, const Image& rendered,
                          const Image& alpha) {
    return 1.0 - pearson_stats(reference, rendered, alpha).r;
}

double pearson_depth_loss_with_grad(const Image& reference, const Image& rendered,
                                    const Image& alpha, double upstream,
                                    Image* grad_rendered) {
    const PearsonStats st = pearson_stats(reference, rendered, alpha);
    if (grad_rendered) {
        *grad_rendered = Image(rendered.width, rendered.height, rendered.channels);
        const double n = static_cast<double>(st.valid.size());
        const bool vy_floored = st.vy < kVarFloor;
        for (size_t i : st.valid) {
            const double x = reference.data[i] - st.mean_x;
            const double y = rendered.data[i] - st.mean_y;
            double dr = x / (n * st.denom);
            if (!vy_floored) dr -= st.r * y / (n * st.vy);
            grad_rendered->data[i] = -upstream * dr;
        }
    }
    return 1.0 - st.r;
}

std::optional<double> try_pearson_depth_loss(const Image& reference,
                                             const Image& rendered, const Image& alpha) {
    try {
        return pearson_depth_loss(reference, rendered, alpha);
    } catch (const InsufficientCoverage&) {
        return std::nullopt;
    }
}

double image_correlation(const Image& a, const Image& b) {
    a.require_same_shape(b);
    const double n = static_cast<double>(a.data.size());
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        ma += a.data[i];
        mb += b.data[i];
    }
    ma /= n;
    mb /= n;
    double va = 0, vb = 0, cab = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double x = a.data[i] - ma, y = b.data[i] - mb;
        va += x * x;
        vb += y * y;
        cab += x * y;
    }
    va /= n;
    vb /= n;
    cab /= n;
    return cab / std::sqrt(std::max(va, kVarFloor) * std::max(vb, kVarFloor));
}

double mse(const Image& a, const Image& b) {
    a.require_same_shape(b);
    double sum = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    return sum / a.data.size();
}

double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    if (m < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / m);
}

} // namespace sgs
