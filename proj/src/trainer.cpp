#include "sgs/trainer.hpp"

#include "sgs/data_io.hpp"
#include "sgs/fadp.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <istream>
#include <random>
#include <sstream>

namespace sgs {

namespace {

double inverse_sigmoid(double p) { return std::log(p / (1.0 - p)); }

// Per-field training bookkeeping kept parallel to the ensemble.
struct FieldState {
    FieldOptimizer opt;
    std::vector<double> grad_accum;
    std::vector<long long> grad_count;
    bool freeze_shape = false;

    void reset_stats(size_t n) {
        grad_accum.assign(n, 0.0);
        grad_count.assign(n, 0);
    }
    void absorb(const GradientBundle& grads) {
        for (size_t i = 0; i < grads.screen_grad.size(); ++i)
            if (grads.screen_grad[i] > 0) {
                grad_accum[i] += grads.screen_grad[i];
                ++grad_count[i];
            }
    }
};

void add_scaled(Image& into, const Image& g) {
    for (size_t i = 0; i < into.data.size(); ++i) into.data[i] += g.data[i];
}

struct StepLoss {
    double l1 = 0, dssim = 0;
    std::optional<double> pearson;
    double weighted() const { return l1 + dssim + pearson.value_or(0.0); }
};

// Renders `field` against a supervised view, applies one optimizer step with
// the photometric (and, when depth is present, depth-correlation) gradients,
// and reports the weighted loss terms. `pose_grad` collects the camera-delta
// gradient when the view's camera is learnable.
StepLoss supervised_step(GaussianField& field, FieldState& state, const Camera& camera,
                         const Image& target, const Image* depth_reference,
                         const TrainConfig& cfg, double weight, double lr_position,
                         Vec6* pose_grad) {
    const RenderOutput out = render(field, camera, cfg.background);

    StepLoss loss;
    Image grad_rgb = l1_loss_backward(out.rgb, target, weight * cfg.lambda1);
    loss.l1 = weight * cfg.lambda1 * l1_loss(out.rgb, target);
    Image grad_ssim;
    dssim_loss_with_grad(out.rgb, target, weight * cfg.lambda2, &grad_ssim);
    loss.dssim = weight * cfg.lambda2 * dssim_loss(out.rgb, target);
    add_scaled(grad_rgb, grad_ssim);

    Image grad_depth;
    if (depth_reference && depth_reference->width == out.depth.width) {
        try {
            grad_depth = Image(out.depth.width, out.depth.height, 1);
            const double p = pearson_depth_loss_with_grad(
                *depth_reference, out.depth, out.alpha, weight * cfg.lambda3,
                &grad_depth);
            loss.pearson = weight * cfg.lambda3 * p;
        } catch (const InsufficientCoverage&) {
            grad_depth = Image(); // not enough confident pixels; skip the term
        }
    }

    const GradientBundle grads = render_backward(field, camera, out, grad_rgb, grad_depth);
    state.absorb(grads);
    state.opt.step(field, grads, cfg.rates, lr_position, state.freeze_shape);
    if (pose_grad && grads.has_camera_delta) *pose_grad += grads.camera_delta;
    return loss;
}

// Standard adaptive density control: clone small high-gradient splats, split
// large ones, prune transparent ones.
void densify_field(GaussianField& field, FieldState& state, double scene_extent,
                   const TrainConfig& cfg, std::mt19937_64& rng) {
    const size_t n = field.count();
    const ActivatedView act = activate(field);
    std::vector<bool> remove(n, false);
    std::vector<size_t> clone, split;
    for (size_t i = 0; i < n; ++i) {
        if (act.opacities[i] < cfg.prune_opacity) {
            remove[i] = true;
            continue;
        }
        const double avg = state.grad_count[i] > 0
                               ? state.grad_accum[i] / static_cast<double>(state.grad_count[i])
                               : 0.0;
        if (avg <= cfg.densify_grad_threshold) continue;
        const double max_scale = act.scales[i].maxCoeff();
        if (max_scale <= 0.01 * scene_extent)
            clone.push_back(i);
        else
            split.push_back(i);
    }
    if (n + clone.size() + 2 * split.size() > cfg.max_splats) {
        clone.clear();
        split.clear();
    }

    std::normal_distribution<double> gauss(0.0, 1.0);
    const size_t added = clone.size() + 2 * split.size();
    const size_t base = field.count();
    field.resize(base + added);
    size_t out = base;
    auto copy_row = [&](size_t dst, size_t src) {
        field.positions[dst] = field.positions[src];
        field.log_scales[dst] = field.log_scales[src];
        field.rotations[dst] = field.rotations[src];
        field.opacity_logits[dst] = field.opacity_logits[src];
        field.colors[dst] = field.colors[src];
    };
    for (size_t i : clone) copy_row(out++, i);
    for (size_t i : split) {
        const Mat3 R = quat_to_matrix(field.rotations[i]);
        const Vec3 s = field.log_scales[i].array().exp();
        for (int rep = 0; rep < 2; ++rep) {
            copy_row(out, i);
            const Vec3 sample(gauss(rng) * s[0], gauss(rng) * s[1], gauss(rng) * s[2]);
            field.positions[out] += R * sample;
            field.log_scales[out] -= Vec3::Constant(std::log(1.6));
            ++out;
        }
        remove[i] = true;
    }
    remove.resize(field.count(), false);

    state.opt.append_rows(added);
    state.opt.remove_masked(remove);
    field.remove_masked(remove);
    state.reset_stats(field.count());
}

void write_checkpoint(const FieldEnsemble& ensemble,
                      const std::vector<PseudoLabel>& labels, const std::string& dir,
                      long long iteration) {
    namespace fs = std::filesystem;
    const fs::path root = fs::path(dir) / ("ckpt_" + std::to_string(iteration));
    fs::create_directories(root);
    save_ply(ensemble.primary, (root / "primary.ply").string());
    save_ply(ensemble.aux1, (root / "aux1.ply").string());
    save_ply(ensemble.aux2, (root / "aux2.ply").string());
    std::vector<Camera> cams;
    for (const PseudoLabel& l : labels) cams.push_back(l.camera);
    save_cameras(cams, (root / "cameras.json").string());
}

} // namespace

void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
    auto as_ll = [&] { return std::stoll(value); };
    auto as_d = [&] { return std::stod(value); };
    auto as_b = [&] {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        throw ParseError("boolean expected for " + key + ": " + value);
    };
    if (key == "total_iterations") c.total_iterations = as_ll();
    else if (key == "freeze_iteration") c.freeze_iteration = as_ll();
    else if (key == "fadp_edge_iteration") c.fadp_edge_iteration = as_ll();
    else if (key == "patch_control_iteration") c.patch_control_iteration = as_ll();
    else if (key == "interpolation_factor") c.interpolation_factor = static_cast<int>(as_ll());
    else if (key == "prune_distance") c.prune_distance = as_d();
    else if (key == "patch_grid") c.patch_grid = static_cast<int>(as_ll());
    else if (key == "inherit_neighbors") c.inherit_neighbors = static_cast<int>(as_ll());
    else if (key == "lambda_low") c.lambda_low = as_d();
    else if (key == "lambda_high") c.lambda_high = as_d();
    else if (key == "patch_floor") c.patch_floor = as_ll();
    else if (key == "lambda1") c.lambda1 = as_d();
    else if (key == "lambda2") c.lambda2 = as_d();
    else if (key == "lambda3") c.lambda3 = as_d();
    else if (key == "lambda_g_start") c.lambda_g_start = as_d();
    else if (key == "lambda_g_end") c.lambda_g_end = as_d();
    else if (key == "guidance_start") c.guidance_start = as_ll();
    else if (key == "guidance_loss_interval") c.guidance_loss_interval = as_ll();
    else if (key == "selection_interval") c.selection_interval = as_ll();
    else if (key == "coprune_start") c.coprune_start = as_ll();
    else if (key == "coprune_interval") c.coprune_interval = as_ll();
    else if (key == "densify_interval") c.densify_interval = as_ll();
    else if (key == "densify_warmup") c.densify_warmup = as_ll();
    else if (key == "densify_until") c.densify_until = as_ll();
    else if (key == "densify_grad_threshold") c.densify_grad_threshold = as_d();
    else if (key == "opacity_reset_interval") c.opacity_reset_interval = as_ll();
    else if (key == "prune_opacity") c.prune_opacity = as_d();
    else if (key == "max_splats") c.max_splats = static_cast<size_t>(as_ll());
    else if (key == "lr_position") c.rates.position = as_d();
    else if (key == "lr_position_final") c.rates.position_final = as_d();
    else if (key == "lr_opacity") c.rates.opacity = as_d();
    else if (key == "lr_scale") c.rates.scale = as_d();
    else if (key == "lr_rotation") c.rates.rotation = as_d();
    else if (key == "lr_color") c.rates.color = as_d();
    else if (key == "lr_pose") c.lr_pose = as_d();
    else if (key == "edge_budget_fraction") c.edge_budget_fraction = as_d();
    else if (key == "aux_opacity_jitter") c.aux_opacity_jitter = as_d();
    else if (key == "additive_score") c.additive_score = as_b();
    else if (key == "coprune_require_both") c.coprune_require_both = as_b();
    else if (key == "enable_guidance") c.enable_guidance = as_b();
    else if (key == "enable_fadp") c.enable_fadp = as_b();
    else if (key == "enable_cpg") c.enable_cpg = as_b();
    else if (key == "seed") c.seed = static_cast<unsigned>(as_ll());
    else if (key == "checkpoint_dir") c.checkpoint_dir = value;
    else if (key == "checkpoint_interval") c.checkpoint_interval = as_ll();
    else if (key == "log_interval") c.log_interval = as_ll();
    else if (key == "background") {
        std::istringstream ss(value);
        std::string part;
        for (int i = 0; i < 3; ++i) {
            if (!std::getline(ss, part, ',')) throw ParseError("background needs r,g,b");
            c.background[i] = std::stod(part);
        }
    } else {
        throw ParseError("unknown config key: " + key);
    }
}

TrainConfig parse_train_config(std::istream& in) {
    TrainConfig config;
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ParseError("expected key = value: " + line);
            continue;
        }
        auto trim = [](std::string s) {
            const size_t b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const size_t e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    validate(config);
    return config;
}

void validate(const TrainConfig& c) {
    if (!(c.patch_control_iteration < c.fadp_edge_iteration &&
          c.fadp_edge_iteration <= c.freeze_iteration &&
          c.freeze_iteration <= c.total_iterations))
        throw Error("schedule must order patch control < edge spawning <= freeze <= end");
    for (double l : {c.lambda1, c.lambda2, c.lambda3})
        if (l < 0 || l > 1) throw Error("loss weights must lie in [0,1]");
    if (c.lambda_g_end < c.lambda_g_start)
        throw Error("guidance weight must be non-decreasing");
    if (!(c.lambda_low > 1.0) || !(c.lambda_high > 0 && c.lambda_high < 1))
        throw InvalidThresholds();
    if (c.interpolation_factor < 2) throw Error("interpolation factor must be >= 2");
}

double lambda_g_at(const TrainConfig& c, long long iteration) {
    if (iteration <= c.guidance_start) return c.lambda_g_start;
    const double span = static_cast<double>(c.total_iterations - c.guidance_start);
    const double frac =
        std::min(1.0, static_cast<double>(iteration - c.guidance_start) / span);
    return c.lambda_g_start + frac * (c.lambda_g_end - c.lambda_g_start);
}

TrainResult train(const std::vector<TrainView>& views, const GaussianField& init,
                  const FrameInterpolator& interpolator, const DepthProxyFn& depth_proxy,
                  const TrainConfig& cfg) {
    validate(cfg);
    if (views.size() < 2) throw InsufficientViews();
    if (init.count() == 0) throw EmptyField();

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    TrainResult result;
    FieldEnsemble& ensemble = result.ensemble;
    ensemble.primary = init;
    ensemble.aux1 = init;
    ensemble.aux2 = init;
    // Independent opacity jitter nudges the auxiliaries toward distinct
    // optima.
    for (GaussianField* aux : {&ensemble.aux1, &ensemble.aux2})
        for (double& logit : aux->opacity_logits)
            logit += cfg.aux_opacity_jitter * uni(rng);

    const int n_fields = cfg.enable_cpg ? 3 : 1;
    std::array<FieldState, 3> states;
    for (int f = 0; f < 3; ++f) states[f].reset_stats(init.count());

    std::vector<Camera> train_cameras;
    std::vector<Image> train_images;
    for (const TrainView& v : views) {
        train_cameras.push_back(v.camera);
        train_images.push_back(v.image);
    }
    const double scene_extent = scaled_delta(1.0, train_cameras);
    const double delta_eff = scaled_delta(cfg.prune_distance, train_cameras);

    std::vector<AdamBuffer> pose_buffers;
    if (cfg.enable_guidance) {
        const PoseTrack track = build_track(train_cameras, cfg.interpolation_factor);
        result.labels =
            generate_pseudo_labels(train_images, track, interpolator, depth_proxy);
        pose_buffers.resize(result.labels.size());
    }

    size_t guidance_cursor = 0;
    const Image* probe_image = &views[0].image;

    for (long long it = 0; it < cfg.total_iterations; ++it) {
        const TrainView& view = views[static_cast<size_t>(it) % views.size()];
        LossBreakdown loss;

        // Reconstruction pass, each field supervised independently.
        for (int f = 0; f < n_fields; ++f) {
            const Image* depth = view.depth.width > 0 ? &view.depth : nullptr;
            const StepLoss step = supervised_step(
                ensemble.field(f), states[f], view.camera, view.image, depth, cfg, 1.0,
                position_lr(cfg.rates, it, cfg.total_iterations), nullptr);
            if (f == 0) {
                loss.l1 = step.l1;
                loss.dssim = step.dssim;
                loss.pearson_depth = step.pearson;
                loss.reconstruction_total = step.weighted();
            }
        }

        // Guidance pass on one selected pseudo label.
        const double lam_g = lambda_g_at(cfg, it);
        if (cfg.enable_guidance && guidance_active(it) &&
            it % cfg.guidance_loss_interval == 0) {
            std::vector<size_t> selected;
            for (size_t i = 0; i < result.labels.size(); ++i)
                if (result.labels[i].selected) selected.push_back(i);
            if (!selected.empty()) {
                PseudoLabel& label = result.labels[selected[guidance_cursor % selected.size()]];
                ++guidance_cursor;
                Vec6 pose_grad = Vec6::Zero();
                for (int f = 0; f < n_fields; ++f) {
                    const Image* depth =
                        label.depth_proxy.width > 0 ? &label.depth_proxy : nullptr;
                    const StepLoss step = supervised_step(
                        ensemble.field(f), states[f], label.camera, label.image, depth,
                        cfg, lam_g, position_lr(cfg.rates, it, cfg.total_iterations),
                        &pose_grad);
                    if (f == 0) loss.guidance_total = step.weighted() / lam_g;
                }
                pose_buffers[selected[(guidance_cursor - 1) % selected.size()]].step(
                    label.camera.delta.data(), pose_grad.data(), 6, cfg.lr_pose,
                    cfg.rates.beta1, cfg.rates.beta2, 1e-8);
            }
        }
        loss.total = loss.reconstruction_total + lam_g * loss.guidance_total;
        if (!std::isfinite(loss.total))
            throw Error("non-finite loss at iteration " + std::to_string(it) +
                        " (splats: " + std::to_string(ensemble.primary.count()) + ")");
        result.last_loss = loss;

        // Standard adaptive density control.
        if (it > cfg.densify_warmup && it < cfg.densify_until &&
            it % cfg.densify_interval == 0)
            for (int f = 0; f < n_fields; ++f) {
                // Frozen auxiliaries keep their shape parameters byte-stable,
                // so density changes are off the table for them.
                if (states[f].freeze_shape) continue;
                densify_field(ensemble.field(f), states[f], scene_extent, cfg, rng);
            }
        if (it > 0 && it < cfg.densify_until && it % cfg.opacity_reset_interval == 0) {
            const double cap = inverse_sigmoid(0.01);
            for (int f = 0; f < n_fields; ++f) {
                for (double& logit : ensemble.field(f).opacity_logits)
                    logit = std::min(logit, cap);
                ++ensemble.field(f).mutation_counter;
            }
        }

        // Patch-level density rebalancing (single event).
        if (cfg.enable_fadp && it == cfg.patch_control_iteration &&
            view.depth.width > 0) {
            const Projection proj = project(view.camera, ensemble.primary);
            const PatchCounts counts = count_patches(proj, view.camera, cfg.patch_grid);
            const RebalanceParams params = default_thresholds(
                counts.counts, cfg.lambda_low, cfg.lambda_high, cfg.patch_floor);
            const std::vector<long long> target = rebalance_counts(counts.counts, params);
            const DensityPlan plan =
                plan_density(ensemble.primary, view.camera, target, cfg.patch_grid);
            const EdgeMap edges = detect_edges(view.image);
            const ApplyReport report =
                apply_plan(ensemble.primary, plan, view.depth, view.alpha, edges,
                           view.camera, cfg.inherit_neighbors,
                           static_cast<unsigned>(rng()));
            std::vector<bool> remove(ensemble.primary.count() + report.pruned, false);
            // Pruned indices refer to the pre-spawn field; spawning only appends.
            for (size_t idx : report.pruned_indices) remove[idx] = true;
            states[0].opt.append_rows(report.spawned);
            states[0].opt.remove_masked(remove);
            states[0].reset_stats(ensemble.primary.count());
        }

        // Edge-guided spawning (single event).
        if (cfg.enable_fadp && it == cfg.fadp_edge_iteration) {
            for (const TrainView& tv : views) {
                if (tv.depth.width == 0) continue;
                if (ensemble.primary.count() >= cfg.max_splats) break;
                const EdgeMap edges = detect_edges(tv.image);
                const size_t budget = std::max<size_t>(
                    1, static_cast<size_t>(cfg.edge_budget_fraction *
                                           static_cast<double>(ensemble.primary.count())));
                const auto pixels =
                    sample_edge_points(edges, budget, static_cast<unsigned>(rng()));
                const auto points = backproject(pixels, tv.depth, tv.alpha, tv.camera);
                spawn_gaussians(points, ensemble.primary, cfg.inherit_neighbors);
                states[0].opt.append_rows(points.size());
                states[0].reset_stats(ensemble.primary.count());
            }
        }

        // Ensemble freeze.
        if (cfg.enable_cpg && it == cfg.freeze_iteration) {
            freeze_auxiliaries(ensemble);
            states[1].freeze_shape = true;
            states[2].freeze_shape = true;
        }

        // Geometric co-pruning.
        if (cfg.enable_cpg && it >= cfg.coprune_start &&
            it % cfg.coprune_interval == 0) {
            const CopruneReport report =
                ensemble.phase == EnsemblePhase::Mutual
                    ? mutual_coprune(ensemble, delta_eff)
                    : unilateral_coprune(ensemble, delta_eff, cfg.coprune_require_both);
            for (int f = 0; f < 3; ++f) {
                if (report.masks[f].empty()) continue;
                states[f].opt.remove_masked(report.masks[f]);
                states[f].reset_stats(ensemble.field(f).count());
            }
        }

        // Pseudo-label quality refresh.
        if (cfg.enable_guidance && it >= cfg.guidance_start &&
            (it - cfg.guidance_start) % cfg.selection_interval == 0) {
            for (PseudoLabel& label : result.labels) {
                const RenderOutput out =
                    render(ensemble.primary, label.camera, cfg.background);
                label.score = score_pseudo_label(label, out, cfg.lambda1, cfg.lambda2,
                                                 cfg.additive_score);
                label.scored = true;
            }
            select_top_half(result.labels);
        }

        if (it % cfg.log_interval == 0) {
            const RenderOutput probe = render(ensemble.primary, views[0].camera,
                                              cfg.background);
            std::ostringstream line;
            line.precision(17);
            line << it << '\t' << loss.total << '\t' << loss.reconstruction_total << '\t'
                 << loss.guidance_total << '\t' << ensemble.primary.count() << '\t'
                 << ensemble.aux1.count() << '\t' << ensemble.aux2.count() << '\t'
                 << psnr(probe.rgb, *probe_image);
            result.log.push_back(line.str());
        }

        if (!cfg.checkpoint_dir.empty() && it > 0 && it % cfg.checkpoint_interval == 0)
            write_checkpoint(ensemble, result.labels, cfg.checkpoint_dir, it);
    }

    if (!cfg.checkpoint_dir.empty())
        write_checkpoint(ensemble, result.labels, cfg.checkpoint_dir,
                         cfg.total_iterations);
    return result;
}

EvalTable evaluate(const GaussianField& field, const std::vector<TrainView>& holdout,
                   const Vec3& background) {
    if (holdout.empty()) throw NothingToEvaluate();
    EvalTable table;
    for (size_t i = 0; i < holdout.size(); ++i) {
        const RenderOutput out = render(field, holdout[i].camera, background);
        EvalRow row;
        row.view = i;
        row.psnr_db = psnr(out.rgb, holdout[i].image);
        row.ssim_value = ssim(out.rgb, holdout[i].image);
        table.rows.push_back(row);
        table.mean_psnr += row.psnr_db;
        table.mean_ssim += row.ssim_value;
    }
    table.mean_psnr /= static_cast<double>(table.rows.size());
    table.mean_ssim /= static_cast<double>(table.rows.size());
    return table;
}

} // namespace sgs
