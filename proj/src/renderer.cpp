#include "sgs/renderer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

namespace sgs {

namespace {

int g_threads = 1;
constexpr int kBands = 16;

// Runs fn(band) for band in [0, nbands). Band work is independent; results
// are combined by the caller in band order, so output does not depend on the
// thread count.
template <typename Fn>
void parallel_bands(int nbands, Fn&& fn) {
    if (g_threads <= 1) {
        for (int b = 0; b < nbands; ++b) fn(b);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int b = next.fetch_add(1);
            if (b >= nbands) return;
            fn(b);
        }
    };
    const int nthreads = std::min(g_threads, nbands);
    std::vector<std::thread> pool;
    pool.reserve(nthreads - 1);
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

struct BandRange {
    int y0, y1; // [y0, y1)
};

BandRange band_rows(int band, int height) {
    return {band * height / kBands, (band + 1) * height / kBands};
}

} // namespace

void set_render_threads(int threads) { g_threads = std::max(1, threads); }
int render_threads() { return g_threads; }

Projection project(const Camera& camera, const GaussianField& field) {
    Projection out;
    out.pose = compose_delta(camera);
    const Mat3& W = out.pose.rotation;
    const Vec3& t = out.pose.translation;
    const ActivatedView act = activate(field);

    const size_t n = field.count();
    out.splats.resize(n);
    for (size_t i = 0; i < n; ++i) {
        ProjectedSplat& s = out.splats[i];
        s.x_cam = W * field.positions[i] + t;
        s.depth = s.x_cam[2];
        if (s.depth <= kNearPlane) {
            s.in_frustum = false;
            continue;
        }
        s.in_frustum = true;
        const double x = s.x_cam[0], y = s.x_cam[1], z = s.x_cam[2];
        s.mean = Vec2(camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy);

        Mat23 J;
        J << camera.fx / z, 0, -camera.fx * x / (z * z), 0, camera.fy / z,
            -camera.fy * y / (z * z);
        s.jacobian = J;

        const Mat3 Rq = quat_to_matrix(quat_normalize(field.rotations[i]));
        const Mat3 M = Rq * act.scales[i].asDiagonal();
        s.cov3d = M * M.transpose();
        s.cov_cam = W * s.cov3d * W.transpose();
        s.cov = J * s.cov_cam * J.transpose();
        s.cov(0, 0) += kCovarianceFloor;
        s.cov(1, 1) += kCovarianceFloor;

        const double det = s.cov.determinant();
        s.conic = s.cov.inverse();

        // Screen bbox from the 3-sigma extent of the major axis. Inclusion is
        // by integer bounding box; the Gaussian is evaluated at every pixel
        // inside, so the finite-difference oracle sees the same cutoff.
        const double mid = 0.5 * (s.cov(0, 0) + s.cov(1, 1));
        const double lmax = mid + std::sqrt(std::max(0.0, mid * mid - det));
        const double radius = 3.0 * std::sqrt(lmax);
        s.x0 = std::max(0, static_cast<int>(std::floor(s.mean[0] - radius)));
        s.x1 = std::min(camera.width - 1, static_cast<int>(std::ceil(s.mean[0] + radius)));
        s.y0 = std::max(0, static_cast<int>(std::floor(s.mean[1] - radius)));
        s.y1 = std::min(camera.height - 1, static_cast<int>(std::ceil(s.mean[1] + radius)));
    }
    return out;
}

namespace {

// Splat ids overlapping the image, sorted front-to-back (depth, then index).
std::vector<uint32_t> depth_order(const Projection& proj) {
    std::vector<uint32_t> order;
    order.reserve(proj.splats.size());
    for (uint32_t i = 0; i < proj.splats.size(); ++i) {
        const ProjectedSplat& s = proj.splats[i];
        if (s.in_frustum && s.x0 <= s.x1 && s.y0 <= s.y1) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        const double da = proj.splats[a].depth, db = proj.splats[b].depth;
        if (da != db) return da < db;
        return a < b;
    });
    return order;
}

// Per-pixel candidate lists in depth order, CSR layout over the whole image.
struct CandidateLists {
    std::vector<uint32_t> offsets; // W*H + 1
    std::vector<uint32_t> splats;
};

CandidateLists build_candidates(const Projection& proj, const std::vector<uint32_t>& order,
                                int width, int height) {
    CandidateLists lists;
    const size_t npix = static_cast<size_t>(width) * height;
    std::vector<uint32_t> counts(npix, 0);
    for (uint32_t id : order) {
        const ProjectedSplat& s = proj.splats[id];
        for (int y = s.y0; y <= s.y1; ++y)
            for (int x = s.x0; x <= s.x1; ++x) ++counts[static_cast<size_t>(y) * width + x];
    }
    lists.offsets.resize(npix + 1);
    lists.offsets[0] = 0;
    for (size_t p = 0; p < npix; ++p) lists.offsets[p + 1] = lists.offsets[p] + counts[p];
    lists.splats.resize(lists.offsets.back());
    std::vector<uint32_t> cursor(lists.offsets.begin(), lists.offsets.end() - 1);
    for (uint32_t id : order) {
        const ProjectedSplat& s = proj.splats[id];
        for (int y = s.y0; y <= s.y1; ++y)
            for (int x = s.x0; x <= s.x1; ++x)
                lists.splats[cursor[static_cast<size_t>(y) * width + x]++] = id;
    }
    return lists;
}

double falloff(const ProjectedSplat& s, double px, double py) {
    const Vec2 d(px - s.mean[0], py - s.mean[1]);
    const double power = -0.5 * d.dot(s.conic * d);
    return std::exp(power);
}

} // namespace

RenderOutput render(const GaussianField& field, const Camera& camera,
                    const Vec3& background) {
    RenderOutput out;
    const int W = camera.width, H = camera.height;
    out.rgb = Image(W, H, 3);
    out.depth = Image(W, H, 1);
    out.alpha = Image(W, H, 1);
    out.background = background;
    out.field_mutation_counter = field.mutation_counter;
    out.projection = project(camera, field);

    const ActivatedView act = activate(field);
    const std::vector<uint32_t> order = depth_order(out.projection);
    const CandidateLists cands = build_candidates(out.projection, order, W, H);

    std::vector<std::vector<uint32_t>> band_contribs(kBands);
    std::vector<std::vector<uint32_t>> band_counts(kBands);

    parallel_bands(kBands, [&](int band) {
        const BandRange rows = band_rows(band, H);
        auto& contribs = band_contribs[band];
        auto& counts = band_counts[band];
        counts.reserve(static_cast<size_t>(rows.y1 - rows.y0) * W);
        for (int y = rows.y0; y < rows.y1; ++y) {
            for (int x = 0; x < W; ++x) {
                const size_t p = static_cast<size_t>(y) * W + x;
                const double px = x + 0.5, py = y + 0.5;
                double T = 1.0;
                Vec3 rgb = Vec3::Zero();
                double depth = 0.0, alpha = 0.0;
                uint32_t ncontrib = 0;
                for (uint32_t c = cands.offsets[p]; c < cands.offsets[p + 1]; ++c) {
                    if (T < kTransmittanceFloor) break;
                    const uint32_t id = cands.splats[c];
                    const ProjectedSplat& s = out.projection.splats[id];
                    const double a = act.opacities[id] * falloff(s, px, py);
                    const double w = a * T;
                    rgb += w * act.rgb[id];
                    depth += w * s.depth;
                    alpha += w;
                    T *= (1.0 - a);
                    contribs.push_back(id);
                    ++ncontrib;
                }
                rgb += background * (1.0 - alpha);
                out.rgb.at(x, y, 0) = rgb[0];
                out.rgb.at(x, y, 1) = rgb[1];
                out.rgb.at(x, y, 2) = rgb[2];
                out.depth.at(x, y, 0) = depth;
                out.alpha.at(x, y, 0) = alpha;
                counts.push_back(ncontrib);
            }
        }
    });

    // Stitch band-local contribution records into one CSR table.
    const size_t npix = static_cast<size_t>(W) * H;
    out.contrib_offsets.resize(npix + 1);
    out.contrib_offsets[0] = 0;
    {
        size_t p = 0;
        for (int band = 0; band < kBands; ++band)
            for (uint32_t c : band_counts[band]) {
                out.contrib_offsets[p + 1] = out.contrib_offsets[p] + c;
                ++p;
            }
    }
    out.contrib_splats.reserve(out.contrib_offsets.back());
    for (int band = 0; band < kBands; ++band)
        out.contrib_splats.insert(out.contrib_splats.end(), band_contribs[band].begin(),
                                  band_contribs[band].end());
    return out;
}

namespace {

// Pixel-space gradient accumulators, one set per band.
struct PixelSpaceGrads {
    std::vector<Vec2> mean;
    std::vector<double> p00, p01, p11; // w.r.t. the conic (inverse 2D cov)
    std::vector<Vec3> color;           // w.r.t. activated rgb
    std::vector<double> opacity;       // w.r.t. activated opacity
    std::vector<double> depth;         // w.r.t. camera-space depth

    void resize(size_t n) {
        mean.assign(n, Vec2::Zero());
        p00.assign(n, 0.0);
        p01.assign(n, 0.0);
        p11.assign(n, 0.0);
        color.assign(n, Vec3::Zero());
        opacity.assign(n, 0.0);
        depth.assign(n, 0.0);
    }

    void add(const PixelSpaceGrads& o) {
        for (size_t i = 0; i < mean.size(); ++i) {
            mean[i] += o.mean[i];
            p00[i] += o.p00[i];
            p01[i] += o.p01[i];
            p11[i] += o.p11[i];
            color[i] += o.color[i];
            opacity[i] += o.opacity[i];
            depth[i] += o.depth[i];
        }
    }
};

} // namespace

GradientBundle render_backward(const GaussianField& field, const Camera& camera,
                               const RenderOutput& output, const Image& grad_rgb,
                               const Image& grad_depth) {
    if (output.field_mutation_counter != field.mutation_counter)
        throw StaleRenderOutput();

    const int W = camera.width, H = camera.height;
    const size_t n = field.count();
    const ActivatedView act = activate(field);
    const Projection& proj = output.projection;
    const Vec3& bg = output.background;
    const bool has_depth_grad = !grad_depth.data.empty();

    std::vector<PixelSpaceGrads> band_grads(kBands);

    parallel_bands(kBands, [&](int band) {
        PixelSpaceGrads& g = band_grads[band];
        g.resize(n);
        const BandRange rows = band_rows(band, H);
        std::vector<double> alphas, trans;
        for (int y = rows.y0; y < rows.y1; ++y) {
            for (int x = 0; x < W; ++x) {
                const size_t p = static_cast<size_t>(y) * W + x;
                const uint32_t begin = output.contrib_offsets[p];
                const uint32_t end = output.contrib_offsets[p + 1];
                if (begin == end) continue;
                const double px = x + 0.5, py = y + 0.5;
                const Vec3 gC(grad_rgb.at(x, y, 0), grad_rgb.at(x, y, 1),
                              grad_rgb.at(x, y, 2));
                const double gD = has_depth_grad ? grad_depth.at(x, y, 0) : 0.0;

                const uint32_t m = end - begin;
                alphas.resize(m);
                trans.resize(m);
                double T = 1.0;
                for (uint32_t i = 0; i < m; ++i) {
                    const uint32_t id = output.contrib_splats[begin + i];
                    const ProjectedSplat& s = proj.splats[id];
                    alphas[i] = act.opacities[id] * falloff(s, px, py);
                    trans[i] = T;
                    T *= (1.0 - alphas[i]);
                }

                // Back-to-front with suffix sums of composited quantities.
                Vec3 suffix_c = Vec3::Zero();
                double suffix_w = 0.0, suffix_d = 0.0;
                for (uint32_t i = m; i-- > 0;) {
                    const uint32_t id = output.contrib_splats[begin + i];
                    const ProjectedSplat& s = proj.splats[id];
                    const double a = alphas[i];
                    const double Ti = trans[i];
                    const double w = a * Ti;
                    const Vec3& ci = act.rgb[id];

                    g.color[id] += gC * w;
                    g.depth[id] += gD * w;

                    const double inv1ma = 1.0 / (1.0 - a);
                    double ga = gC.dot(Ti * ci - suffix_c * inv1ma);
                    ga -= gC.dot(bg) * (Ti - suffix_w * inv1ma);
                    ga += gD * (Ti * s.depth - suffix_d * inv1ma);

                    suffix_c += w * ci;
                    suffix_w += w;
                    suffix_d += w * s.depth;

                    const double G = a / act.opacities[id];
                    g.opacity[id] += ga * G;
                    const double gG = ga * act.opacities[id];
                    const double dpower = gG * G;

                    const Vec2 d(px - s.mean[0], py - s.mean[1]);
                    const Vec2 Pd = s.conic * d;
                    g.mean[id] += dpower * Pd;
                    g.p00[id] += dpower * (-0.5 * d[0] * d[0]);
                    g.p01[id] += dpower * (-d[0] * d[1]); // both off-diagonals
                    g.p11[id] += dpower * (-0.5 * d[1] * d[1]);
                }
            }
        }
    });

    PixelSpaceGrads total = std::move(band_grads[0]);
    for (int b = 1; b < kBands; ++b) total.add(band_grads[b]);

    GradientBundle bundle;
    bundle.resize(n);
    bundle.has_camera_delta = camera.learnable;

    const Mat3& Wrot = proj.pose.rotation;
    Mat3 gW = Mat3::Zero();
    Vec3 gt = Vec3::Zero();

    for (size_t i = 0; i < n; ++i) {
        const ProjectedSplat& s = proj.splats[i];
        if (!s.in_frustum) continue;

        bundle.screen_grad[i] = total.mean[i].norm();

        // Conic -> 2D covariance: dL/dCov = -P (dL/dP) P.
        Mat2 gP;
        gP << total.p00[i], 0.5 * total.p01[i], 0.5 * total.p01[i], total.p11[i];
        const Mat2 gCov2d = -s.conic * gP * s.conic;

        // Cov2d = J Sigma_cam J^T (+ floor).
        const Mat23& J = s.jacobian;
        const Mat23 gJ = 2.0 * gCov2d * J * s.cov_cam;
        const Mat3 gCovCam = J.transpose() * gCov2d * J;

        // Sigma_cam = W Sigma W^T.
        const Mat3 gCov3d = Wrot.transpose() * gCovCam * Wrot;
        gW += 2.0 * gCovCam * Wrot * s.cov3d;

        // Sigma = M M^T, M = R(q) diag(scale).
        const Mat3 Rq = quat_to_matrix(quat_normalize(field.rotations[i]));
        const Vec3 scale = field.log_scales[i].array().exp();
        const Mat3 M = Rq * scale.asDiagonal();
        const Mat3 gM = 2.0 * gCov3d * M;
        const Mat3 gS = Rq.transpose() * gM;
        for (int k = 0; k < 3; ++k) bundle.log_scales[i][k] = gS(k, k) * scale[k];
        const Mat3 gRq = gM * scale.asDiagonal();
        bundle.rotations[i] = quat_rotation_backward(field.rotations[i], gRq);

        // Camera-space position: mean projection, depth, and J dependence.
        Vec3 gx = J.transpose() * total.mean[i];
        gx[2] += total.depth[i];
        const double xk = s.x_cam[0], yk = s.x_cam[1], z = s.x_cam[2];
        const double z2 = z * z, z3 = z2 * z;
        gx[0] += gJ(0, 2) * (-camera.fx / z2);
        gx[1] += gJ(1, 2) * (-camera.fy / z2);
        gx[2] += gJ(0, 0) * (-camera.fx / z2) + gJ(0, 2) * (2.0 * camera.fx * xk / z3) +
                 gJ(1, 1) * (-camera.fy / z2) + gJ(1, 2) * (2.0 * camera.fy * yk / z3);

        // x_cam = W p + t.
        bundle.positions[i] = Wrot.transpose() * gx;
        gt += gx;
        gW += gx * field.positions[i].transpose();

        // Activations.
        const double o = act.opacities[i];
        bundle.opacity_logits[i] = total.opacity[i] * o * (1.0 - o);
        for (int c = 0; c < 3; ++c) {
            const double col = act.rgb[i][c];
            bundle.colors[i][c] = total.color[i][c] * col * (1.0 - col);
        }
    }

    if (camera.learnable) {
        bundle.camera_delta.tail<3>() = gt;
        // W = exp(aa) R_base; perturbation delta acts as (I + [Jl delta]x) W.
        const Mat3 B = Wrot * gW.transpose();
        const Vec3 v(B(1, 2) - B(2, 1), B(2, 0) - B(0, 2), B(0, 1) - B(1, 0));
        bundle.camera_delta.head<3>() =
            so3_left_jacobian(camera.delta.head<3>()).transpose() * v;
    }
    return bundle;
}

} // namespace sgs
