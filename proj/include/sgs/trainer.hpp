#pragma once

#include "sgs/cpg.hpp"
#include "sgs/guidance.hpp"
#include "sgs/losses.hpp"
#include "sgs/optim.hpp"
#include "sgs/pose.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace sgs {

struct TrainConfig {
    long long total_iterations = 20000;
    long long freeze_iteration = 10000;        // ensemble freeze (N_iter)
    long long fadp_edge_iteration = 10000;     // edge-guided spawning
    long long patch_control_iteration = 8000;  // patch density rebalancing

    int interpolation_factor = 4;  // S: S-1 poses per adjacent pair
    double prune_distance = 5.0;   // in camera-bbox-normalized units
    int patch_grid = 8;            // m: m x m patches
    int inherit_neighbors = 3;     // K for attribute inheritance

    double lambda_low = 2.0;
    double lambda_high = 0.8;
    long long patch_floor = 4;  // c_min

    double lambda1 = 0.8;   // L1 weight
    double lambda2 = 0.2;   // D-SSIM weight
    double lambda3 = 0.05;  // depth-correlation weight

    double lambda_g_start = 0.075;
    double lambda_g_end = 0.15;
    long long guidance_start = 2000;
    long long guidance_loss_interval = 10;
    long long selection_interval = 1000;

    long long coprune_start = 3000;
    long long coprune_interval = 500;

    long long densify_interval = 100;
    long long densify_warmup = 500;
    long long densify_until = 15000;
    double densify_grad_threshold = 2e-4;
    long long opacity_reset_interval = 3000;
    double prune_opacity = 0.005;
    size_t max_splats = 2000;

    LearningRates rates;
    double lr_pose = 1e-4;

    double edge_budget_fraction = 0.05;  // of current splat count
    double aux_opacity_jitter = 0.1;
    bool additive_score = false;
    bool coprune_require_both = false;

    bool enable_guidance = true;  // image-level pseudo labels
    bool enable_fadp = true;      // feature level
    bool enable_cpg = true;       // geometry level

    Vec3 background = Vec3::Zero();
    unsigned seed = 0;

    std::string checkpoint_dir;  // empty disables checkpoints
    long long checkpoint_interval = 5000;
    long long log_interval = 100;
};

// key = value schema mirroring the field names above (background as three
// comma-separated values). Unknown keys raise ParseError.
void set_config_value(TrainConfig& config, const std::string& key,
                      const std::string& value);
TrainConfig parse_train_config(std::istream& in);
void validate(const TrainConfig& config);  // schedule ordering + weight ranges

// lambda_g ramps linearly from its start value at guidance_start to its end
// value at total_iterations; monotone non-decreasing.
double lambda_g_at(const TrainConfig& config, long long iteration);

struct TrainView {
    Camera camera;
    Image image;  // H x W x 3 supervision
    Image depth;  // H x W x 1; width 0 when absent
    Image alpha;  // coverage mask for the depth term; width 0 when absent
};

struct TrainResult {
    FieldEnsemble ensemble;
    std::vector<PseudoLabel> labels;
    std::vector<std::string> log;  // tab-separated, one line per log interval
    LossBreakdown last_loss;
};

TrainResult train(const std::vector<TrainView>& views, const GaussianField& init,
                  const FrameInterpolator& interpolator, const DepthProxyFn& depth_proxy,
                  const TrainConfig& config);

struct EvalRow {
    size_t view = 0;
    double psnr_db = 0;
    double ssim_value = 0;
};

struct EvalTable {
    std::vector<EvalRow> rows;
    double mean_psnr = 0;
    double mean_ssim = 0;
};

// Renders the field at each holdout view and scores against its image.
EvalTable evaluate(const GaussianField& field, const std::vector<TrainView>& holdout,
                   const Vec3& background);

} // namespace sgs
