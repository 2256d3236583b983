#pragma once

#include "sgs/image.hpp"
#include "sgs/pose.hpp"
#include "sgs/renderer.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sgs {

struct PseudoLabel {
    Image image;       // H x W x 3
    Image depth_proxy; // H x W x 1, any monotone scale; may be empty
    Camera camera;     // learnable, from pose interpolation
    size_t pair_index = 0;
    double alpha = 0.0;
    double score = 0.0; // quality metric M, lower is better
    bool scored = false;
    bool selected = false;
};

// Produces an intermediate image between two endpoint views.
class FrameInterpolator {
public:
    virtual ~FrameInterpolator() = default;
    virtual Image interpolate(const Image& a, const Image& b, double alpha) const = 0;
};

// (1-alpha)*a + alpha*b baseline.
class CrossFadeInterpolator : public FrameInterpolator {
public:
    Image interpolate(const Image& a, const Image& b, double alpha) const override;
};

// Loads externally precomputed frames named pair{n}_alpha{k}of{S}.png from a
// directory; endpoint images are ignored.
class FileInterpolator : public FrameInterpolator {
public:
    FileInterpolator(std::string directory, int factor);
    Image interpolate(const Image& a, const Image& b, double alpha) const override;

    // Set per label before interpolate() so the loader can derive the name.
    mutable size_t pair_index = 0;

private:
    std::string dir_;
    int factor_;
};

// Optional per-camera depth source consulted in priority order by
// generate_pseudo_labels (ground-truth synthesizer, file loader, or render).
using DepthProxyFn =
    std::function<std::optional<Image>(const InterpolatedCamera&)>;

std::vector<PseudoLabel> generate_pseudo_labels(const std::vector<Image>& train_images,
                                                const PoseTrack& track,
                                                const FrameInterpolator& interpolator,
                                                const DepthProxyFn& depth_proxy = {});

// Quality metric M; lower is better. The second term multiplies D-SSIM by
// the image Pearson correlation; `additive` switches to a plain sum instead.
double score_pseudo_label(const PseudoLabel& label, const RenderOutput& rendered,
                          double lambda1, double lambda2, bool additive = false);

// Marks the floor(N/2) labels with the smallest M selected (ties by pair
// index then alpha); everything else is unselected.
void select_top_half(std::vector<PseudoLabel>& labels);

// Guidance window: off before iteration 2000, then on for the first 100
// iterations of every 200-iteration cycle.
bool guidance_active(long long iteration);

} // namespace sgs
