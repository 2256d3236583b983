#include "sgs/fadp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

namespace sgs {

size_t EdgeMap::edge_count() const {
    size_t n = 0;
    for (uint8_t v : mask) n += v != 0;
    return n;
}

EdgeMap detect_edges(const Image& image) {
    const int W = image.width, H = image.height;
    EdgeMap edges;
    edges.width = W;
    edges.height = H;
    edges.mask.assign(static_cast<size_t>(W) * H, 0);
    edges.detector = "sobel-nms-hysteresis";
    if (W < 3 || H < 3) return edges;

    // Luminance.
    std::vector<double> lum(static_cast<size_t>(W) * H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double v;
            if (image.channels >= 3)
                v = 0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) +
                    0.114 * image.at(x, y, 2);
            else
                v = image.at(x, y, 0);
            lum[static_cast<size_t>(y) * W + x] = v;
        }
    auto L = [&](int x, int y) {
        x = std::clamp(x, 0, W - 1);
        y = std::clamp(y, 0, H - 1);
        return lum[static_cast<size_t>(y) * W + x];
    };

    std::vector<double> mag(static_cast<size_t>(W) * H, 0.0);
    std::vector<double> gx_map(mag.size(), 0.0), gy_map(mag.size(), 0.0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double gx = (L(x + 1, y - 1) + 2 * L(x + 1, y) + L(x + 1, y + 1)) -
                              (L(x - 1, y - 1) + 2 * L(x - 1, y) + L(x - 1, y + 1));
            const double gy = (L(x - 1, y + 1) + 2 * L(x, y + 1) + L(x + 1, y + 1)) -
                              (L(x - 1, y - 1) + 2 * L(x, y - 1) + L(x + 1, y - 1));
            const size_t i = static_cast<size_t>(y) * W + x;
            gx_map[i] = gx;
            gy_map[i] = gy;
            mag[i] = std::hypot(gx, gy);
        }

    // Percentile over the responsive pixels only; flat regions would
    // otherwise drag the threshold to zero.
    std::vector<double> sorted;
    sorted.reserve(mag.size());
    for (double v : mag)
        if (v > 1e-12) sorted.push_back(v);
    if (sorted.empty()) return edges;
    const size_t rank = static_cast<size_t>(0.9 * (sorted.size() - 1));
    std::nth_element(sorted.begin(), sorted.begin() + rank, sorted.end());
    const double high = sorted[rank];
    const double low = high / 2.0;
    edges.threshold_high = high;
    if (high <= 1e-12) return edges; // flat image

    // Non-maximum suppression along the quantized gradient direction.
    std::vector<uint8_t> thin(mag.size(), 0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const size_t i = static_cast<size_t>(y) * W + x;
            if (mag[i] < low) continue;
            const double angle = std::atan2(gy_map[i], gx_map[i]);
            // Quantize to one of 4 directions.
            const double deg = std::fmod(angle * 180.0 / M_PI + 180.0, 180.0);
            int dx = 1, dy = 0;
            if (deg >= 22.5 && deg < 67.5) {
                dx = 1;
                dy = 1;
            } else if (deg >= 67.5 && deg < 112.5) {
                dx = 0;
                dy = 1;
            } else if (deg >= 112.5 && deg < 157.5) {
                dx = -1;
                dy = 1;
            }
            auto M = [&](int xx, int yy) {
                if (xx < 0 || xx >= W || yy < 0 || yy >= H) return 0.0;
                return mag[static_cast<size_t>(yy) * W + xx];
            };
            if (mag[i] >= M(x + dx, y + dy) && mag[i] >= M(x - dx, y - dy)) thin[i] = 1;
        }

    // Hysteresis: strong pixels seed, weak pixels join via 8-connectivity.
    std::deque<size_t> queue;
    for (size_t i = 0; i < mag.size(); ++i)
        if (thin[i] && mag[i] >= high) {
            edges.mask[i] = 1;
            queue.push_back(i);
        }
    while (!queue.empty()) {
        const size_t i = queue.front();
        queue.pop_front();
        const int x = static_cast<int>(i % W), y = static_cast<int>(i / W);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int xx = x + dx, yy = y + dy;
                if (xx < 0 || xx >= W || yy < 0 || yy >= H) continue;
                const size_t j = static_cast<size_t>(yy) * W + xx;
                if (thin[j] && !edges.mask[j] && mag[j] >= low) {
                    edges.mask[j] = 1;
                    queue.push_back(j);
                }
            }
    }
    return edges;
}

std::vector<std::pair<int, int>> sample_edge_points(const EdgeMap& edges, size_t budget,
                                                    unsigned seed) {
    std::vector<std::pair<int, int>> pixels;
    for (int y = 0; y < edges.height; ++y)
        for (int x = 0; x < edges.width; ++x)
            if (edges.at(x, y)) pixels.emplace_back(x, y);
    std::mt19937_64 rng(seed);
    // Fisher-Yates; take the first min(budget, n).
    for (size_t i = pixels.size(); i > 1; --i)
        std::swap(pixels[i - 1], pixels[rng() % i]);
    if (pixels.size() > budget) pixels.resize(budget);
    return pixels;
}

std::vector<Vec3> backproject(const std::vector<std::pair<int, int>>& pixels,
                              const Image& depth, const Image& alpha,
                              const Camera& camera) {
    const EffectivePose pose = compose_delta(camera);
    const Mat3 R_inv = pose.rotation.transpose();
    std::vector<Vec3> points;
    points.reserve(pixels.size());
    for (auto [x, y] : pixels) {
        if (alpha.at(x, y, 0) <= 0.5) continue;
        const double d = depth.at(x, y, 0);
        const Vec3 ray((x + 0.5 - camera.cx) / camera.fx, (y + 0.5 - camera.cy) / camera.fy,
                       1.0);
        points.push_back(R_inv * (d * ray - pose.translation));
    }
    return points;
}

void spawn_gaussians(const std::vector<Vec3>& points, GaussianField& field, size_t k) {
    if (field.count() < k) throw InsufficientNeighbors();
    if (points.empty()) return;
    const SpatialIndex index(field.positions);
    constexpr double kEps = 1e-8;

    const size_t base = field.count();
    field.resize(base + points.size());
    for (size_t p = 0; p < points.size(); ++p) {
        const auto nn = index.k_nearest(points[p], k);
        double wsum = 0;
        Vec3 log_scale = Vec3::Zero(), color = Vec3::Zero();
        Vec4 rotation = Vec4::Zero();
        double logit = 0;
        const Vec4 ref = field.rotations[nn[0].first];
        for (const auto& [idx, dist] : nn) {
            const double w = 1.0 / (dist + kEps);
            wsum += w;
            log_scale += w * field.log_scales[idx];
            color += w * field.colors[idx];
            logit += w * field.opacity_logits[idx];
            // Quaternion sign-aligned to the nearest neighbor before the
            // componentwise average.
            Vec4 q = field.rotations[idx];
            if (q.dot(ref) < 0) q = -q;
            rotation += w * q;
        }
        const size_t out = base + p;
        field.positions[out] = points[p];
        field.log_scales[out] = log_scale / wsum;
        field.colors[out] = color / wsum;
        field.opacity_logits[out] = logit / wsum;
        field.rotations[out] = quat_normalize(rotation / wsum);
    }
}

PatchCounts count_patches(const Projection& proj, const Camera& camera, int m,
                          std::vector<int>* splat_patch) {
    PatchCounts pc;
    pc.m = m;
    pc.width = camera.width;
    pc.height = camera.height;
    pc.counts.assign(static_cast<size_t>(m) * m, 0);
    if (splat_patch) splat_patch->assign(proj.splats.size(), -1);
    for (size_t i = 0; i < proj.splats.size(); ++i) {
        const ProjectedSplat& s = proj.splats[i];
        if (!s.in_frustum) continue;
        const double px = std::clamp(s.mean[0], 0.0, camera.width - 1e-9);
        const double py = std::clamp(s.mean[1], 0.0, camera.height - 1e-9);
        const int gx = std::min(m - 1, static_cast<int>(px * m / camera.width));
        const int gy = std::min(m - 1, static_cast<int>(py * m / camera.height));
        const int patch = gy * m + gx;
        ++pc.counts[patch];
        if (splat_patch) (*splat_patch)[i] = patch;
    }
    return pc;
}

std::vector<long long> rebalance_counts(const std::vector<long long>& counts,
                                        const RebalanceParams& p) {
    if (!(0 <= p.tau_sparse && p.tau_sparse < p.tau_low && p.tau_low <= p.tau_high) ||
        !(p.lambda_low > 1.0) || !(p.lambda_high > 0.0 && p.lambda_high < 1.0))
        throw InvalidThresholds();

    const long long total = std::accumulate(counts.begin(), counts.end(), 0LL);
    std::vector<double> raw(counts.size());
    for (size_t i = 0; i < counts.size(); ++i) {
        const double c = static_cast<double>(counts[i]);
        if (c <= p.tau_sparse)
            raw[i] = static_cast<double>(p.c_min);
        else if (c < p.tau_low)
            raw[i] = c * p.lambda_low;
        else if (c <= p.tau_high)
            raw[i] = c;
        else
            raw[i] = c * p.lambda_high;
    }
    const double raw_sum = std::accumulate(raw.begin(), raw.end(), 0.0);
    std::vector<long long> out(counts.size(), 0);
    if (raw_sum <= 0) {
        // Degenerate (all-empty image); dump everything into patch 0.
        if (!out.empty()) out[0] = total;
        return out;
    }

    const double scale = static_cast<double>(total) / raw_sum;
    std::vector<double> frac(counts.size());
    long long rounded_sum = 0;
    for (size_t i = 0; i < counts.size(); ++i) {
        const double scaled = raw[i] * scale;
        out[i] = static_cast<long long>(std::floor(scaled + 0.5)); // round half-up
        frac[i] = scaled - std::floor(scaled);
        rounded_sum += out[i];
    }

    long long residual = total - rounded_sum;
    if (residual > 0) {
        // Give one unit at a time to patches by descending fractional part.
        std::vector<size_t> order(counts.size());
        std::iota(order.begin(), order.end(), 0u);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (frac[a] != frac[b]) return frac[a] > frac[b];
            return a < b;
        });
        size_t cursor = 0;
        while (residual > 0) {
            ++out[order[cursor % order.size()]];
            ++cursor;
            --residual;
        }
    } else if (residual < 0) {
        // Take from the largest counts first.
        while (residual < 0) {
            size_t best = 0;
            for (size_t i = 1; i < out.size(); ++i)
                if (out[i] > out[best]) best = i;
            --out[best];
            ++residual;
        }
    }
    return out;
}

RebalanceParams default_thresholds(const std::vector<long long>& counts,
                                   double lambda_low, double lambda_high,
                                   long long c_min) {
    std::vector<long long> sorted = counts;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    auto rank_value = [&](double frac) {
        const size_t idx = std::min(sorted.size() - 1,
                                    static_cast<size_t>(frac * (sorted.size() - 1)));
        return static_cast<double>(sorted[idx]);
    };
    RebalanceParams p;
    p.tau_sparse = rank_value(0.9); // densest 90% boundary
    p.tau_high = rank_value(0.1);
    p.tau_low = rank_value(0.5);
    p.lambda_low = lambda_low;
    p.lambda_high = lambda_high;
    p.c_min = c_min;
    // Percentiles of discrete counts can collide; nudge into a valid order.
    if (p.tau_low <= p.tau_sparse) p.tau_low = p.tau_sparse + 1;
    if (p.tau_high < p.tau_low) p.tau_high = p.tau_low;
    return p;
}

bool DensityPlan::empty() const {
    for (const auto& pr : prune)
        if (!pr.empty()) return false;
    for (long long s : spawn)
        if (s > 0) return false;
    return true;
}

DensityPlan plan_density(const GaussianField& field, const Camera& camera,
                         const std::vector<long long>& target, int m) {
    const Projection proj = project(camera, field);
    std::vector<int> splat_patch;
    const PatchCounts pc = count_patches(proj, camera, m, &splat_patch);

    DensityPlan plan;
    plan.m = m;
    plan.current = pc.counts;
    plan.target = target;
    plan.prune.resize(pc.counts.size());
    plan.spawn.assign(pc.counts.size(), 0);

    const ActivatedView act = activate(field);
    for (size_t patch = 0; patch < pc.counts.size(); ++patch) {
        const long long delta = target[patch] - pc.counts[patch];
        if (delta > 0) {
            plan.spawn[patch] = delta;
        } else if (delta < 0) {
            // Prune the in-patch splats with the lowest activated opacity.
            std::vector<size_t> members;
            for (size_t i = 0; i < field.count(); ++i)
                if (splat_patch[i] == static_cast<int>(patch)) members.push_back(i);
            std::sort(members.begin(), members.end(), [&](size_t a, size_t b) {
                if (act.opacities[a] != act.opacities[b])
                    return act.opacities[a] < act.opacities[b];
                return a < b;
            });
            members.resize(static_cast<size_t>(-delta));
            plan.prune[patch] = std::move(members);
        }
    }
    return plan;
}

ApplyReport apply_plan(GaussianField& field, const DensityPlan& plan, const Image& depth,
                       const Image& alpha, const EdgeMap& edges, const Camera& camera,
                       size_t k, unsigned seed) {
    ApplyReport report;
    const int m = plan.m;
    const int W = camera.width, H = camera.height;

    // Gather spawn pixels per patch, preferring edge pixels.
    std::vector<std::pair<int, int>> spawn_pixels;
    std::mt19937_64 rng(seed);
    for (int gy = 0; gy < m; ++gy) {
        for (int gx = 0; gx < m; ++gx) {
            const size_t patch = static_cast<size_t>(gy) * m + gx;
            long long want = plan.spawn[patch];
            if (want <= 0) continue;
            const int x0 = gx * W / m, x1 = (gx + 1) * W / m;
            const int y0 = gy * H / m, y1 = (gy + 1) * H / m;
            std::vector<std::pair<int, int>> edge_px, other_px;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    if (alpha.at(x, y, 0) <= 0.5) continue;
                    (edges.at(x, y) ? edge_px : other_px).emplace_back(x, y);
                }
            if (edge_px.empty() && other_px.empty()) {
                ++report.skipped_patches;
                continue;
            }
            auto shuffle = [&](std::vector<std::pair<int, int>>& v) {
                for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
            };
            shuffle(edge_px);
            shuffle(other_px);
            // Draw with wraparound so small patches can still meet the quota.
            std::vector<std::pair<int, int>> pool = edge_px;
            pool.insert(pool.end(), other_px.begin(), other_px.end());
            for (long long i = 0; i < want; ++i)
                spawn_pixels.push_back(pool[static_cast<size_t>(i) % pool.size()]);
        }
    }

    // Rank prune candidates by activated opacity before the field mutates.
    std::vector<std::pair<double, size_t>> candidates;
    {
        const ActivatedView act = activate(field);
        for (const auto& patch : plan.prune)
            for (size_t idx : patch) candidates.emplace_back(act.opacities[idx], idx);
    }
    std::sort(candidates.begin(), candidates.end());

    long long planned_spawn = 0;
    for (long long s : plan.spawn)
        if (s > 0) planned_spawn += s;

    const std::vector<Vec3> points = backproject(spawn_pixels, depth, alpha, camera);
    spawn_gaussians(points, field, k);
    report.spawned = points.size();

    // Prune (indices refer to the pre-spawn field; spawning only appends).
    // Cancel prunes against the spawn shortfall so a plan whose spawn patches
    // lack coverage cannot drain the field: keep the highest-opacity
    // candidates, remove the rest.
    const long long shortfall =
        std::max(0LL, planned_spawn - static_cast<long long>(report.spawned));
    const long long execute = std::max(
        0LL, static_cast<long long>(candidates.size()) - shortfall);
    candidates.resize(static_cast<size_t>(execute));
    std::vector<bool> mask(field.count(), false);
    for (const auto& [opacity, idx] : candidates) {
        mask[idx] = true;
        report.pruned_indices.push_back(idx);
    }
    std::sort(report.pruned_indices.begin(), report.pruned_indices.end());
    report.pruned = report.pruned_indices.size();
    field.remove_masked(mask);
    return report;
}

} // namespace sgs
