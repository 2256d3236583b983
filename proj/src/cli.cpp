#include "sgs/cli.hpp"

#include "sgs/cpg.hpp"
#include "sgs/data_io.hpp"
#include "sgs/fadp.hpp"
#include "sgs/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace sgs {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string label_stem(size_t pair, int k, int factor) {
    return "pair" + std::to_string(pair) + "_alpha" + std::to_string(k) + "of" +
           std::to_string(factor);
}

// Every subcommand records what it ran and what it produced.
void write_manifest(const fs::path& dir, const std::string& command, const json& args,
                    const std::vector<fs::path>& outputs) {
    json doc;
    doc["command"] = command;
    doc["args"] = args;
    json hashes = json::object();
    for (const fs::path& p : outputs)
        hashes[fs::relative(p, dir).string()] = hash_file(p.string());
    doc["outputs"] = hashes;
    std::ofstream out(dir / "manifest.json");
    out << doc.dump(2) << "\n";
}

struct SceneOnDisk {
    std::vector<Camera> cameras;
    std::vector<TrainView> views; // one per camera
    std::vector<size_t> train_split, holdout_split;
    Vec3 background = Vec3::Zero();
    int label_factor = 0; // 0 when no label directory was written
};

void save_scene(const SyntheticScene& scene, const fs::path& dir, int label_factor,
                std::vector<fs::path>& outputs) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "depths");
    fs::create_directories(dir / "alphas");

    save_ply(scene.ground_truth, (dir / "gt.ply").string());
    save_ply(scene.initial_points, (dir / "init.ply").string());
    save_cameras(scene.cameras, (dir / "cameras.json").string());
    outputs.push_back(dir / "gt.ply");
    outputs.push_back(dir / "init.ply");
    outputs.push_back(dir / "cameras.json");

    for (size_t i = 0; i < scene.cameras.size(); ++i) {
        const std::string n = "view" + std::to_string(i);
        save_png(scene.images[i], (dir / "images" / (n + ".png")).string());
        save_depth_float(scene.depths[i], (dir / "depths" / (n + ".sgdf")).string());
        save_depth_float(scene.alphas[i], (dir / "alphas" / (n + ".sgdf")).string());
        outputs.push_back(dir / "images" / (n + ".png"));
        outputs.push_back(dir / "depths" / (n + ".sgdf"));
        outputs.push_back(dir / "alphas" / (n + ".sgdf"));
    }

    json meta;
    meta["background"] = {scene.background[0], scene.background[1], scene.background[2]};
    meta["seed"] = scene.seed;
    meta["train"] = scene.train_split;
    meta["holdout"] = scene.holdout_split;
    meta["label_factor"] = label_factor;
    std::ofstream(dir / "scene.json") << meta.dump(2) << "\n";
    outputs.push_back(dir / "scene.json");

    if (label_factor >= 2) {
        // Externally supplied intermediate frames: ground-truth renders at the
        // interpolated poses, plus matching depth proxies.
        fs::create_directories(dir / "labels");
        std::vector<Camera> train_cams;
        for (size_t i : scene.train_split) train_cams.push_back(scene.cameras[i]);
        const PoseTrack track = build_track(train_cams, label_factor);
        for (const InterpolatedCamera& ic : track.interpolated) {
            const RenderOutput out =
                render(scene.ground_truth, ic.camera, scene.background);
            const int k = static_cast<int>(std::lround(ic.alpha * label_factor));
            const std::string stem = label_stem(ic.pair_index, k, label_factor);
            save_png(out.rgb, (dir / "labels" / (stem + ".png")).string());
            save_depth_float(out.depth, (dir / "labels" / (stem + ".sgdf")).string());
            outputs.push_back(dir / "labels" / (stem + ".png"));
            outputs.push_back(dir / "labels" / (stem + ".sgdf"));
        }
    }
}

SceneOnDisk load_scene(const fs::path& dir) {
    SceneOnDisk scene;
    scene.cameras = load_cameras((dir / "cameras.json").string());

    std::ifstream meta_in(dir / "scene.json");
    if (!meta_in) throw Error("not a scene directory (missing scene.json): " + dir.string());
    json meta;
    meta_in >> meta;
    for (int i = 0; i < 3; ++i) scene.background[i] = meta.at("background")[i];
    scene.train_split = meta.at("train").get<std::vector<size_t>>();
    scene.holdout_split = meta.at("holdout").get<std::vector<size_t>>();
    scene.label_factor = meta.value("label_factor", 0);

    for (size_t i = 0; i < scene.cameras.size(); ++i) {
        const std::string n = "view" + std::to_string(i);
        TrainView v;
        v.camera = scene.cameras[i];
        v.image = load_png((dir / "images" / (n + ".png")).string());
        v.depth = load_depth_float((dir / "depths" / (n + ".sgdf")).string());
        v.alpha = load_depth_float((dir / "alphas" / (n + ".sgdf")).string());
        scene.views.push_back(std::move(v));
    }
    return scene;
}

std::vector<TrainView> pick(const SceneOnDisk& scene, const std::vector<size_t>& split) {
    std::vector<TrainView> views;
    for (size_t i : split) views.push_back(scene.views[i]);
    return views;
}

int cmd_synth(const fs::path& out_dir, size_t splats, size_t cameras, int resolution,
              unsigned seed, int label_factor) {
    fs::create_directories(out_dir);
    const SyntheticScene scene = synth_scene(splats, cameras, resolution, seed);
    std::vector<fs::path> outputs;
    save_scene(scene, out_dir, label_factor, outputs);
    json args = {{"splats", splats},         {"cameras", cameras},
                 {"resolution", resolution}, {"seed", seed},
                 {"label_factor", label_factor}};
    write_manifest(out_dir, "synth", args, outputs);
    std::cout << "scene written to " << out_dir.string() << " ("
              << scene.cameras.size() << " views)\n";
    return 0;
}

int cmd_train(const fs::path& scene_dir, const fs::path& out_dir,
              const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::vector<std::string>& ablate) {
    TrainConfig cfg;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw Error("cannot open config: " + config_path);
        cfg = parse_train_config(in);
    }
    for (const std::string& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value: " + kv);
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const std::string& level : ablate) {
        if (level == "pl") cfg.enable_guidance = false;
        else if (level == "fadp") cfg.enable_fadp = false;
        else if (level == "cpg") cfg.enable_cpg = false;
        else throw ParseError("unknown ablation level: " + level +
                              " (expected pl, fadp, or cpg)");
    }
    validate(cfg);

    const SceneOnDisk scene = load_scene(scene_dir);
    cfg.background = scene.background;
    fs::create_directories(out_dir);
    cfg.checkpoint_dir = out_dir.string();

    const GaussianField init = load_ply((scene_dir / "init.ply").string());
    const std::vector<TrainView> train_views = pick(scene, scene.train_split);

    // Prefer precomputed label frames when the scene ships them.
    std::unique_ptr<FrameInterpolator> interp;
    DepthProxyFn depth_proxy;
    if (scene.label_factor >= 2 && fs::exists(scene_dir / "labels")) {
        cfg.interpolation_factor = scene.label_factor;
        interp = std::make_unique<FileInterpolator>((scene_dir / "labels").string(),
                                                    scene.label_factor);
        const fs::path label_dir = scene_dir / "labels";
        const int factor = scene.label_factor;
        depth_proxy = [label_dir, factor](const InterpolatedCamera& ic)
            -> std::optional<Image> {
            const int k = static_cast<int>(std::lround(ic.alpha * factor));
            const fs::path p = label_dir / (label_stem(ic.pair_index, k, factor) + ".sgdf");
            if (!fs::exists(p)) return std::nullopt;
            return load_depth_float(p.string());
        };
    } else {
        interp = std::make_unique<CrossFadeInterpolator>();
    }

    const TrainResult result = train(train_views, init, *interp, depth_proxy, cfg);

    std::ofstream log_out(out_dir / "log.txt");
    for (const std::string& line : result.log) log_out << line << "\n";
    log_out.close();
    save_ply(result.ensemble.primary, (out_dir / "primary.ply").string());

    const EvalTable table =
        evaluate(result.ensemble.primary, pick(scene, scene.holdout_split),
                 scene.background);
    json metrics;
    metrics["mean_psnr"] = table.mean_psnr;
    metrics["mean_ssim"] = table.mean_ssim;
    for (const EvalRow& row : table.rows)
        metrics["views"].push_back(
            {{"view", row.view}, {"psnr", row.psnr_db}, {"ssim", row.ssim_value}});
    std::ofstream(out_dir / "metrics.json") << metrics.dump(2) << "\n";

    json args = {{"scene", scene_dir.string()},
                 {"config", config_path},
                 {"set", overrides},
                 {"ablate", ablate},
                 {"seed", cfg.seed}};
    write_manifest(out_dir, "train", args,
                   {out_dir / "log.txt", out_dir / "primary.ply",
                    out_dir / "metrics.json"});
    std::cout << "holdout mean psnr " << table.mean_psnr << " dB over "
              << table.rows.size() << " views\n";
    return 0;
}

int cmd_render(const std::string& field_path, const std::string& cameras_path,
               const fs::path& out_dir, const Vec3& background) {
    const GaussianField field = load_ply(field_path);
    const std::vector<Camera> cameras = load_cameras(cameras_path);
    fs::create_directories(out_dir);
    std::vector<fs::path> outputs;
    for (size_t i = 0; i < cameras.size(); ++i) {
        const RenderOutput out = render(field, cameras[i], background);
        const fs::path rgb = out_dir / ("view" + std::to_string(i) + ".png");
        const fs::path depth = out_dir / ("view" + std::to_string(i) + ".sgdf");
        save_png(out.rgb, rgb.string());
        save_depth_float(out.depth, depth.string());
        outputs.push_back(rgb);
        outputs.push_back(depth);
    }
    write_manifest(out_dir, "render",
                   {{"field", field_path}, {"cameras", cameras_path}}, outputs);
    std::cout << "rendered " << cameras.size() << " views\n";
    return 0;
}

int cmd_eval(const std::string& field_path, const fs::path& scene_dir,
             const std::string& split, const fs::path& out_dir) {
    const GaussianField field = load_ply(field_path);
    const SceneOnDisk scene = load_scene(scene_dir);
    const std::vector<TrainView> views =
        pick(scene, split == "train" ? scene.train_split : scene.holdout_split);
    const EvalTable table = evaluate(field, views, scene.background);

    std::cout << "view\tpsnr\tssim\n";
    std::cout.precision(17);
    for (const EvalRow& row : table.rows)
        std::cout << row.view << '\t' << row.psnr_db << '\t' << row.ssim_value << "\n";
    std::cout << "mean\t" << table.mean_psnr << '\t' << table.mean_ssim << "\n";

    fs::create_directories(out_dir);
    json metrics;
    metrics["mean_psnr"] = table.mean_psnr;
    metrics["mean_ssim"] = table.mean_ssim;
    for (const EvalRow& row : table.rows)
        metrics["views"].push_back(
            {{"view", row.view}, {"psnr", row.psnr_db}, {"ssim", row.ssim_value}});
    std::ofstream(out_dir / "metrics.json") << metrics.dump(2) << "\n";
    write_manifest(out_dir, "eval",
                   {{"field", field_path}, {"scene", scene_dir.string()},
                    {"split", split}},
                   {out_dir / "metrics.json"});
    return 0;
}

int cmd_interp_poses(const std::string& cameras_path, int factor,
                     const fs::path& out_dir) {
    const std::vector<Camera> cameras = load_cameras(cameras_path);
    const PoseTrack track = build_track(cameras, factor);
    fs::create_directories(out_dir);
    std::vector<Camera> cams;
    json meta = json::array();
    for (const InterpolatedCamera& ic : track.interpolated) {
        cams.push_back(ic.camera);
        meta.push_back({{"pair_index", ic.pair_index}, {"alpha", ic.alpha}});
    }
    save_cameras(cams, (out_dir / "interpolated.json").string());
    std::ofstream(out_dir / "track.json") << meta.dump(2) << "\n";
    write_manifest(out_dir, "interp-poses",
                   {{"cameras", cameras_path}, {"factor", factor}},
                   {out_dir / "interpolated.json", out_dir / "track.json"});
    std::cout << track.interpolated.size() << " interpolated poses\n";
    return 0;
}

int cmd_coprune(const std::string& source_path, const std::string& target_path,
                double delta, const std::string& normalize_cameras,
                const fs::path& out_dir) {
    GaussianField source = load_ply(source_path);
    const GaussianField target = load_ply(target_path);
    double delta_eff = delta;
    if (!normalize_cameras.empty())
        delta_eff = scaled_delta(delta, load_cameras(normalize_cameras));
    const std::vector<bool> mask = coprune_mask(source, target, delta_eff);
    size_t removed = 0;
    for (bool b : mask) removed += b;
    source.remove_masked(mask);
    fs::create_directories(out_dir);
    save_ply(source, (out_dir / "pruned.ply").string());
    write_manifest(out_dir, "coprune",
                   {{"source", source_path}, {"target", target_path},
                    {"delta", delta}, {"delta_effective", delta_eff}},
                   {out_dir / "pruned.ply"});
    std::cout << "removed " << removed << " of " << mask.size() << " splats\n";
    return 0;
}

int cmd_fadp_run(const std::string& field_path, const fs::path& scene_dir,
                 size_t view_index, int grid, const fs::path& out_dir) {
    GaussianField field = load_ply(field_path);
    const SceneOnDisk scene = load_scene(scene_dir);
    if (view_index >= scene.views.size()) throw Error("view index out of range");
    const TrainView& view = scene.views[view_index];

    const Projection proj = project(view.camera, field);
    const PatchCounts counts = count_patches(proj, view.camera, grid);
    const RebalanceParams params = default_thresholds(counts.counts, 2.0, 0.8, 4);
    const std::vector<long long> target = rebalance_counts(counts.counts, params);
    const DensityPlan plan = plan_density(field, view.camera, target, grid);
    const EdgeMap edges = detect_edges(view.image);
    const ApplyReport report =
        apply_plan(field, plan, view.depth, view.alpha, edges, view.camera, 3, 1);

    fs::create_directories(out_dir);
    save_ply(field, (out_dir / "rebalanced.ply").string());
    json args = {{"field", field_path},  {"scene", scene_dir.string()},
                 {"view", view_index},   {"grid", grid},
                 {"spawned", report.spawned}, {"pruned", report.pruned}};
    write_manifest(out_dir, "fadp-run", args, {out_dir / "rebalanced.ply"});
    std::cout << "spawned " << report.spawned << ", pruned " << report.pruned << "\n";
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"sparse-view Gaussian splatting pipeline"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker thread cap (results are identical "
                                         "for any value)");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic scene");
    size_t synth_splats = 600, synth_cameras = 12;
    int synth_resolution = 64, synth_factor = 4;
    unsigned synth_seed = 0;
    std::string synth_out = "scene";
    synth->add_option("--splats", synth_splats, "ground-truth splat count")
        ->capture_default_str();
    synth->add_option("--cameras", synth_cameras, "camera ring size")
        ->capture_default_str();
    synth->add_option("--resolution", synth_resolution, "image side in pixels")
        ->capture_default_str();
    synth->add_option("--seed", synth_seed, "scene seed")->capture_default_str();
    synth->add_option("--factor", synth_factor,
                      "pose interpolation factor for label frames (0 disables)")
        ->capture_default_str();
    synth->add_option("--out", synth_out, "output directory")->capture_default_str();

    // train
    auto* train_cmd = app.add_subcommand("train", "run the full training pipeline");
    std::string train_scene, train_out = "run", train_config;
    std::vector<std::string> train_set, train_ablate;
    train_cmd->add_option("--scene", train_scene, "scene directory")->required();
    train_cmd->add_option("--out", train_out, "output directory")->capture_default_str();
    train_cmd->add_option("--config", train_config, "key = value config file");
    train_cmd->add_option("--set", train_set, "config override key=value (repeatable)");
    train_cmd
        ->add_option("--ablate", train_ablate,
                     "disable levels: pl (image), fadp (feature), cpg (geometry)")
        ->delimiter(',');

    // render
    auto* render_cmd = app.add_subcommand("render", "render views from a field");
    std::string render_field, render_cameras, render_out = "renders";
    std::vector<double> render_bg = {0, 0, 0};
    render_cmd->add_option("--field", render_field, "PLY field")->required();
    render_cmd->add_option("--cameras", render_cameras, "camera JSON")->required();
    render_cmd->add_option("--out", render_out, "output directory")
        ->capture_default_str();
    render_cmd->add_option("--background", render_bg, "background r g b")
        ->expected(3);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score a field against scene views");
    std::string eval_field, eval_scene, eval_split = "holdout", eval_out = "eval";
    eval_cmd->add_option("--field", eval_field, "PLY field")->required();
    eval_cmd->add_option("--scene", eval_scene, "scene directory")->required();
    eval_cmd->add_option("--split", eval_split, "train or holdout")
        ->check(CLI::IsMember({"train", "holdout"}))
        ->capture_default_str();
    eval_cmd->add_option("--out", eval_out, "output directory")->capture_default_str();

    // interp-poses
    auto* interp_cmd = app.add_subcommand("interp-poses", "dump interpolated cameras");
    std::string interp_cameras, interp_out = "poses";
    int interp_factor = 4;
    interp_cmd->add_option("--cameras", interp_cameras, "camera JSON")->required();
    interp_cmd->add_option("--factor", interp_factor, "interpolation factor")
        ->capture_default_str();
    interp_cmd->add_option("--out", interp_out, "output directory")
        ->capture_default_str();

    // coprune
    auto* coprune_cmd =
        app.add_subcommand("coprune", "prune a field against a reference field");
    std::string coprune_source, coprune_target, coprune_norm, coprune_out = "coprune";
    double coprune_delta = 5.0;
    coprune_cmd->add_option("source", coprune_source, "PLY to prune")->required();
    coprune_cmd->add_option("target", coprune_target, "reference PLY")->required();
    coprune_cmd->add_option("--delta", coprune_delta, "distance threshold")
        ->capture_default_str();
    coprune_cmd->add_option("--normalize", coprune_norm,
                            "camera JSON; scales delta by the camera bbox diagonal");
    coprune_cmd->add_option("--out", coprune_out, "output directory")
        ->capture_default_str();

    // fadp-run
    auto* fadp_cmd = app.add_subcommand("fadp-run", "offline density rebalancing");
    std::string fadp_field, fadp_scene, fadp_out = "fadp";
    size_t fadp_view = 0;
    int fadp_grid = 8;
    fadp_cmd->add_option("--field", fadp_field, "PLY field")->required();
    fadp_cmd->add_option("--scene", fadp_scene, "scene directory")->required();
    fadp_cmd->add_option("--view", fadp_view, "view index")->capture_default_str();
    fadp_cmd->add_option("--grid", fadp_grid, "patch grid side")->capture_default_str();
    fadp_cmd->add_option("--out", fadp_out, "output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        set_render_threads(threads);
        if (synth->parsed())
            return cmd_synth(synth_out, synth_splats, synth_cameras, synth_resolution,
                             synth_seed, synth_factor);
        if (train_cmd->parsed())
            return cmd_train(train_scene, train_out, train_config, train_set,
                             train_ablate);
        if (render_cmd->parsed())
            return cmd_render(render_field, render_cameras, render_out,
                              Vec3(render_bg[0], render_bg[1], render_bg[2]));
        if (eval_cmd->parsed()) return cmd_eval(eval_field, eval_scene, eval_split, eval_out);
        if (interp_cmd->parsed())
            return cmd_interp_poses(interp_cameras, interp_factor, interp_out);
        if (coprune_cmd->parsed())
            return cmd_coprune(coprune_source, coprune_target, coprune_delta,
                               coprune_norm, coprune_out);
        if (fadp_cmd->parsed())
            return cmd_fadp_run(fadp_field, fadp_scene, fadp_view, fadp_grid, fadp_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace sgs
