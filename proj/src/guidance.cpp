#include "sgs/guidance.hpp"

#include "sgs/data_io.hpp"
#include "sgs/losses.hpp"

#include <algorithm>
#include <cmath>

namespace sgs {

Image CrossFadeInterpolator::interpolate(const Image& a, const Image& b,
                                         double alpha) const {
    a.require_same_shape(b);
    Image out(a.width, a.height, a.channels);
    for (size_t i = 0; i < a.data.size(); ++i)
        out.data[i] = (1.0 - alpha) * a.data[i] + alpha * b.data[i];
    return out;
}

FileInterpolator::FileInterpolator(std::string directory, int factor)
    : dir_(std::move(directory)), factor_(factor) {}

Image FileInterpolator::interpolate(const Image& a, const Image&, double alpha) const {
    const int k = static_cast<int>(std::lround(alpha * factor_));
    const std::string path = dir_ + "/pair" + std::to_string(pair_index) + "_alpha" +
                             std::to_string(k) + "of" + std::to_string(factor_) + ".png";
    Image img = load_png(path);
    if (img.width != a.width || img.height != a.height)
        throw InterpolatorContractViolation();
    return img;
}

std::vector<PseudoLabel> generate_pseudo_labels(const std::vector<Image>& train_images,
                                                const PoseTrack& track,
                                                const FrameInterpolator& interpolator,
                                                const DepthProxyFn& depth_proxy) {
    if (train_images.size() != track.training.size())
        throw Error("one training image required per track camera");
    std::vector<PseudoLabel> labels;
    labels.reserve(track.interpolated.size());
    for (const InterpolatedCamera& ic : track.interpolated) {
        const Image& a = train_images[ic.pair_index];
        const Image& b = train_images[ic.pair_index + 1];
        if (auto* file = dynamic_cast<const FileInterpolator*>(&interpolator))
            file->pair_index = ic.pair_index;
        PseudoLabel label;
        label.image = interpolator.interpolate(a, b, ic.alpha);
        if (!label.image.same_shape(a)) throw InterpolatorContractViolation();
        label.camera = ic.camera;
        label.pair_index = ic.pair_index;
        label.alpha = ic.alpha;
        if (depth_proxy) {
            if (auto d = depth_proxy(ic)) label.depth_proxy = std::move(*d);
        }
        labels.push_back(std::move(label));
    }
    return labels;
}

double score_pseudo_label(const PseudoLabel& label, const RenderOutput& rendered,
                          double lambda1, double lambda2, bool additive) {
    const double l1 = l1_loss(label.image, rendered.rgb);
    const double ds = dssim_loss(label.image, rendered.rgb);
    const double cor = image_correlation(rendered.rgb, label.image);
    if (additive) return lambda1 * l1 + lambda2 * (ds + cor);
    return lambda1 * l1 + lambda2 * ds * cor;
}

void select_top_half(std::vector<PseudoLabel>& labels) {
    if (labels.size() < 2) throw NothingToSelect();
    std::vector<size_t> order(labels.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (labels[a].score != labels[b].score) return labels[a].score < labels[b].score;
        if (labels[a].pair_index != labels[b].pair_index)
            return labels[a].pair_index < labels[b].pair_index;
        return labels[a].alpha < labels[b].alpha;
    });
    for (auto& l : labels) l.selected = false;
    const size_t take = labels.size() / 2;
    for (size_t i = 0; i < take; ++i) labels[order[i]].selected = true;
}

bool guidance_active(long long iteration) {
    if (iteration < 2000) return false;
    return (iteration - 2000) % 200 < 100;
}

} // namespace sgs
