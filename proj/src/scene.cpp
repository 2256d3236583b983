#include "sgs/scene.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

namespace sgs {

void GaussianField::remove_masked(const std::vector<bool>& mask) {
    size_t out = 0;
    for (size_t i = 0; i < count(); ++i) {
        if (mask[i]) continue;
        positions[out] = positions[i];
        log_scales[out] = log_scales[i];
        rotations[out] = rotations[i];
        opacity_logits[out] = opacity_logits[i];
        colors[out] = colors[i];
        ++out;
    }
    resize(out);
}

ActivatedView activate(const GaussianField& field) {
    ActivatedView v;
    const size_t n = field.count();
    v.scales.resize(n);
    v.opacities.resize(n);
    v.rgb.resize(n);
    for (size_t i = 0; i < n; ++i) {
        v.scales[i] = field.log_scales[i].array().exp();
        v.opacities[i] = sigmoid(field.opacity_logits[i]);
        v.rgb[i] = Vec3(sigmoid(field.colors[i][0]), sigmoid(field.colors[i][1]),
                        sigmoid(field.colors[i][2]));
    }
    return v;
}

EffectivePose compose_delta(const Camera& camera) {
    EffectivePose p;
    const Mat3 base = quat_to_matrix(quat_normalize(camera.rotation));
    p.rotation = axis_angle_to_matrix(camera.delta.head<3>()) * base;
    p.translation = camera.translation + camera.delta.tail<3>();
    return p;
}

SpatialIndex::SpatialIndex(const GaussianField& field) : SpatialIndex(field.positions) {}

SpatialIndex::SpatialIndex(const std::vector<Vec3>& points) : points_(points) {
    if (points_.empty()) throw EmptyField();
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * points_.size() / 8 + 8);
    nodes_.emplace_back();
    build(0, 0, static_cast<uint32_t>(points_.size()), 0);
}

void SpatialIndex::build(int node, uint32_t begin, uint32_t end, int depth) {
    constexpr uint32_t kLeafSize = 16;
    if (end - begin <= kLeafSize) {
        nodes_[node].axis = -1;
        nodes_[node].begin = begin;
        nodes_[node].end = end;
        return;
    }
    const int axis = depth % 3;
    const uint32_t mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](uint32_t a, uint32_t b) {
                         return points_[a][axis] < points_[b][axis];
                     });
    nodes_[node].axis = axis;
    nodes_[node].split = points_[order_[mid]][axis];
    const int left = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    nodes_[node].left = left;
    nodes_[node].right = left + 1;
    build(left, begin, mid, depth + 1);
    build(left + 1, mid, end, depth + 1);
}

namespace {
struct Candidate {
    double dist;
    size_t index;
    // Max-heap ordering: worst candidate on top; ties keep the higher index
    // on top so lower indices survive.
    bool operator<(const Candidate& o) const {
        if (dist != o.dist) return dist < o.dist;
        return index < o.index;
    }
};
} // namespace

std::vector<std::pair<size_t, double>> SpatialIndex::k_nearest(const Vec3& query,
                                                               size_t k) const {
    if (k < 1 || k > points_.size()) throw InsufficientNeighbors();
    std::priority_queue<Candidate> heap;

    auto consider = [&](uint32_t idx) {
        const double d = (points_[idx] - query).norm();
        Candidate c{d, idx};
        if (heap.size() < k) {
            heap.push(c);
        } else if (c < heap.top()) {
            heap.pop();
            heap.push(c);
        }
    };

    // Depth-first traversal, near side first, pruning by plane distance.
    std::vector<std::pair<int, double>> todo;
    todo.emplace_back(0, 0.0);
    while (!todo.empty()) {
        auto [node, min_dist] = todo.back();
        todo.pop_back();
        if (heap.size() == k && min_dist > heap.top().dist) continue;
        const Node& n = nodes_[node];
        if (n.axis < 0) {
            for (uint32_t i = n.begin; i < n.end; ++i) consider(order_[i]);
            continue;
        }
        const double diff = query[n.axis] - n.split;
        const int near = diff < 0 ? n.left : n.right;
        const int far = diff < 0 ? n.right : n.left;
        todo.emplace_back(far, std::abs(diff));
        todo.emplace_back(near, min_dist);
    }

    std::vector<std::pair<size_t, double>> result(heap.size());
    for (size_t i = result.size(); i-- > 0;) {
        result[i] = {heap.top().index, heap.top().dist};
        heap.pop();
    }
    return result;
}

std::vector<std::pair<size_t, double>> brute_force_k_nearest(
    const std::vector<Vec3>& points, const Vec3& query, size_t k) {
    if (k < 1 || k > points.size()) throw InsufficientNeighbors();
    std::vector<std::pair<size_t, double>> all(points.size());
    for (size_t i = 0; i < points.size(); ++i) all[i] = {i, (points[i] - query).norm()};
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    all.resize(k);
    return all;
}

} // namespace sgs
