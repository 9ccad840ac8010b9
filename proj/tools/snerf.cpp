// Command-line front end: phantom generation, volume rendering, dataset
// generation, stylization, radiance-field training/rendering, evaluation,
// and the full pipeline.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "snerf/pipeline.hpp"

namespace fs = std::filesystem;
using namespace snerf;

namespace {

void apply_thread_env() {
#ifdef _OPENMP
    if (const char* v = std::getenv("SNERF_THREADS")) {
        const int n = std::atoi(v);
        if (n > 0) omp_set_num_threads(n);
    }
#endif
}

PipelineConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return pipeline_config_from_json(nlohmann::json::object());
    return load_pipeline_config(path);
}

// Global seed override: derive stage seeds so one flag re-seeds everything.
void override_seed(PipelineConfig& cfg, uint64_t seed) {
    cfg.seed = seed;
    cfg.phantom_seed = seed;
    cfg.poses.seed = hash_combine(seed, 1);
    cfg.style.strotss.seed = hash_combine(seed, 2);
    cfg.train_cfg.seed = hash_combine(seed, 3);
    cfg.render_cfg.seed = hash_combine(seed, 4);
    cfg.eval_seed = hash_combine(seed, 9);
}

CameraPose pose_from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open pose file " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    const auto& m = j.contains("transform_matrix") ? j["transform_matrix"] : j;
    CameraPose pose;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) pose.transform(r, c) = m.at(size_t(r)).at(size_t(c)).get<double>();
    pose.validate();
    return pose;
}

std::vector<Image> image_set_from_arg(const std::string& arg, const std::string& poses_dir,
                                      const RenderConfig& rcfg) {
    if (arg.size() > 5 && arg.substr(arg.size() - 5) == ".snrf") {
        if (poses_dir.empty())
            throw ConfigError("evaluating a model ('" + arg + "') requires --poses <dataset dir>");
        const auto model = load_model(arg);
        const PosedDataset ds = read_dataset(poses_dir);
        std::vector<Image> out;
        for (const auto& f : ds.frames) out.push_back(render_view(model, f.pose, ds.intrinsics, rcfg));
        return out;
    }
    const PosedDataset ds = read_dataset(arg);
    std::vector<Image> out;
    for (const auto& f : ds.frames) out.push_back(f.image);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_env();
    CLI::App app{"snerf: single-image radiance-field pipeline for surgical-style view synthesis"};
    app.require_subcommand(1);

    std::string config_path, out_path, volume_path, tf_path, dataset_dir, style_path, model_path;
    std::string content_path, pose_arg, poses_dir, set_a, set_b, mode_str = "hybrid";
    uint64_t seed = 0;
    bool have_seed = false, deterministic = false;
    int width = 256, height = 256;
    uint64_t phantom_seed = 42;
    std::vector<int> dims{96, 96, 96};

    app.add_flag_callback("--deterministic", [&] { deterministic = true; },
                          "Force deterministic modes in every stage");

    auto* gen_phantom_cmd = app.add_subcommand("gen-phantom", "Generate a synthetic phantom volume");
    gen_phantom_cmd->add_option("--seed", phantom_seed, "Phantom seed");
    gen_phantom_cmd->add_option("--dims", dims, "Voxel dims (1 or 3 values)")->expected(1, 3);
    gen_phantom_cmd->add_option("--out", out_path, "Output volume (<name>.json + <name>.raw)")
        ->required();

    auto* render_volume_cmd = app.add_subcommand("render-volume", "Ray-cast a posed volume view");
    render_volume_cmd->add_option("--volume", volume_path, "Volume (.json/.raw/.nii)")->required();
    render_volume_cmd->add_option("--tf", tf_path, "Transfer function JSON (default: built-in)");
    render_volume_cmd->add_option("--pose", pose_arg, "Pose JSON file (default: auto head-on view)");
    render_volume_cmd->add_option("--width", width, "Image width");
    render_volume_cmd->add_option("--height", height, "Image height");
    render_volume_cmd->add_option("--out", out_path, "Output PNG")->required();

    auto* gen_dataset_cmd = app.add_subcommand("gen-dataset", "Sample poses and render the dataset");
    gen_dataset_cmd->add_option("--config", config_path, "Pipeline config JSON");
    gen_dataset_cmd->add_option("--seed", seed, "Global seed override")->each([&](const std::string&) {
        have_seed = true;
    });
    gen_dataset_cmd->add_option("--out", out_path, "Output directory")->required();

    auto* stylize_cmd = app.add_subcommand("stylize", "Transfer a style image's appearance");
    stylize_cmd->add_option("--content", content_path, "Content PNG or dataset directory")->required();
    stylize_cmd->add_option("--style", style_path, "Style PNG")->required();
    stylize_cmd->add_option("--mode", mode_str, "wct|strotss|hybrid");
    stylize_cmd->add_option("--config", config_path, "Pipeline config JSON (style section)");
    stylize_cmd->add_option("--out", out_path, "Output PNG or dataset directory")->required();

    auto* train_cmd = app.add_subcommand("train", "Train the radiance field on a dataset");
    train_cmd->add_option("--dataset", dataset_dir, "Dataset directory")->required();
    train_cmd->add_option("--config", config_path, "Pipeline config JSON (nerf section)");
    train_cmd->add_option("--seed", seed, "Global seed override")->each([&](const std::string&) {
        have_seed = true;
    });
    train_cmd->add_option("--out", out_path, "Output checkpoint (.snrf)")->required();

    auto* render_cmd = app.add_subcommand("render", "Render a view from a trained model");
    render_cmd->add_option("--model", model_path, "Checkpoint (.snrf)")->required();
    render_cmd->add_option("--pose", pose_arg, "Frame index (with --dataset) or pose JSON file")
        ->required();
    render_cmd->add_option("--dataset", dataset_dir, "Dataset directory for pose-by-index");
    render_cmd->add_option("--config", config_path, "Pipeline config JSON (nerf.render section)");
    render_cmd->add_option("--out", out_path, "Output PNG")->required();

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Agreement report between two view sets");
    evaluate_cmd->add_option("--a", set_a, "Dataset dir or model.snrf")->required();
    evaluate_cmd->add_option("--b", set_b, "Dataset dir or model.snrf")->required();
    evaluate_cmd->add_option("--poses", poses_dir, "Dataset dir providing poses for model args");
    evaluate_cmd->add_option("--config", config_path, "Pipeline config JSON (nerf.render section)");
    evaluate_cmd->add_option("--out", out_path, "Output report JSON")->required();

    auto* pipeline_cmd = app.add_subcommand("pipeline", "Run all stages (Fig-1 order)");
    pipeline_cmd->add_option("--config", config_path, "Pipeline config JSON");
    pipeline_cmd->add_option("--seed", seed, "Global seed override")->each([&](const std::string&) {
        have_seed = true;
    });
    pipeline_cmd->add_option("--out", out_path, "Output directory override");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_phantom_cmd->parsed()) {
            std::array<int, 3> d{dims[0], dims.size() > 1 ? dims[1] : dims[0],
                                 dims.size() > 2 ? dims[2] : dims[0]};
            const auto vol = gen_phantom(phantom_seed, d);
            save_volume_raw(vol, out_path);
            std::cout << "wrote " << out_path << " (" << d[0] << "x" << d[1] << "x" << d[2] << ")\n";
        } else if (render_volume_cmd->parsed()) {
            const auto vol = load_volume(volume_path);
            TransferFunction tf = default_preop_tf();
            if (!tf_path.empty()) {
                std::ifstream f(tf_path);
                if (!f) throw ConfigError("cannot open transfer function " + tf_path);
                tf = transfer_function_from_json(nlohmann::json::parse(f));
            }
            CameraPose pose;
            if (!pose_arg.empty()) {
                pose = pose_from_json_file(pose_arg);
            } else {
                const auto ext = vol.extent_mm();
                const Eigen::Vector3d center(vol.origin_mm[0] + 0.5 * ext[0],
                                             vol.origin_mm[1] + 0.5 * ext[1],
                                             vol.origin_mm[2] + 0.5 * ext[2]);
                const double reach = std::sqrt(ext[0] * ext[0] + ext[1] * ext[1] + ext[2] * ext[2]);
                pose = look_at(center + Eigen::Vector3d(0, 0, 1.5 * reach), center);
            }
            RaycastConfig rc;
            rc.step_mm = 0.5 * std::min({vol.spacing_mm[0], vol.spacing_mm[1], vol.spacing_mm[2]});
            const auto img =
                render_volume(vol, tf, pose, CameraIntrinsics::make_default(width, height), rc);
            write_png(out_path, img);
            std::cout << "wrote " << out_path << "\n";
        } else if (gen_dataset_cmd->parsed()) {
            PipelineConfig cfg = load_config_or_default(config_path);
            if (have_seed) override_seed(cfg, seed);
            VoxelVolume vol = cfg.volume_path.empty() ? gen_phantom(cfg.phantom_seed, cfg.phantom_dims)
                                                      : load_volume(cfg.volume_path);
            const RoiSpec roi = cfg.roi_auto
                                    ? auto_roi(vol, cfg.roi_normal, cfg.roi_diameter_mm)
                                    : RoiSpec{cfg.roi_center, cfg.roi_diameter_mm, cfg.roi_normal};
            const auto poses = sample_poses(roi, cfg.poses);
            const auto intr = CameraIntrinsics::make_default(cfg.image_width, cfg.image_height);
            const auto ds = build_dataset(vol, cfg.preop_tf, poses, intr, cfg.raycast);
            write_dataset(ds, out_path);
            std::cout << "wrote " << ds.frames.size() << " frames to " << out_path << "\n";
        } else if (stylize_cmd->parsed()) {
            PipelineConfig cfg = load_config_or_default(config_path);
            cfg.style.mode = style_mode_from_string(mode_str);
            const Image style_img = read_png(style_path);
            if (fs::is_directory(content_path)) {
                const auto ds = read_dataset(content_path);
                const auto out = stylize_dataset(ds, style_img, cfg.style);
                write_dataset(out, out_path);
                std::cout << "stylized " << out.frames.size() << " frames into " << out_path << "\n";
            } else {
                const Image content = read_png(content_path);
                write_png(out_path, stylize(content, style_img, cfg.style));
                std::cout << "wrote " << out_path << "\n";
            }
        } else if (train_cmd->parsed()) {
            PipelineConfig cfg = load_config_or_default(config_path);
            if (have_seed) override_seed(cfg, seed);
            if (deterministic) cfg.train_cfg.deterministic = true;
            const auto ds = read_dataset(dataset_dir);
            RadianceFieldModel<float> model;
            model.encoding.cfg = cfg.grid;
            model.init(cfg.train_cfg.seed);
            fit_scene_box(ds, cfg.train_cfg.scene_radius_scale, model.encoding.bbox_min,
                          model.encoding.bbox_max);
            model.train_intrinsics = ds.intrinsics;
            const auto tr = train(model, ds, cfg.train_cfg, cfg.render_cfg);
            save_model(model, out_path);
            std::cout << "trained " << cfg.train_cfg.iterations << " iterations, final loss "
                      << tr.loss_history.back() << ", wrote " << out_path << "\n";
        } else if (render_cmd->parsed()) {
            PipelineConfig cfg = load_config_or_default(config_path);
            const auto model = load_model(model_path);
            CameraPose pose;
            CameraIntrinsics intr = model.train_intrinsics;
            const bool is_index = !pose_arg.empty() &&
                                  pose_arg.find_first_not_of("0123456789") == std::string::npos;
            if (is_index) {
                if (dataset_dir.empty())
                    throw ConfigError("render: pose-by-index requires --dataset");
                const auto ds = read_dataset(dataset_dir);
                const size_t idx = size_t(std::stoul(pose_arg));
                if (idx >= ds.frames.size())
                    throw ConfigError("render: pose index out of range (dataset has " +
                                      std::to_string(ds.frames.size()) + " frames)");
                pose = ds.frames[idx].pose;
                intr = ds.intrinsics;
            } else {
                pose = pose_from_json_file(pose_arg);
            }
            if (intr.width <= 0)
                throw ConfigError("render: checkpoint lacks intrinsics; pass --dataset");
            write_png(out_path, render_view(model, pose, intr, cfg.render_cfg));
            std::cout << "wrote " << out_path << "\n";
        } else if (evaluate_cmd->parsed()) {
            PipelineConfig cfg = load_config_or_default(config_path);
            const auto imgs_a = image_set_from_arg(set_a, poses_dir, cfg.render_cfg);
            const auto imgs_b = image_set_from_arg(set_b, poses_dir, cfg.render_cfg);
            const auto report = evaluate_agreement(imgs_a, imgs_b);
            std::ofstream f(out_path);
            if (!f) throw ConfigError("cannot open " + out_path);
            f << report.to_json().dump(1) << "\n";
            std::cout << report.format_table();
        } else if (pipeline_cmd->parsed()) {
            PipelineConfig cfg = load_config_or_default(config_path);
            if (have_seed) override_seed(cfg, seed);
            if (!out_path.empty()) cfg.out_dir = out_path;
            if (deterministic) {
                cfg.deterministic = true;
                cfg.train_cfg.deterministic = true;
            }
            run_pipeline(cfg, std::cout);
            std::cout << "pipeline complete: " << cfg.out_dir << "\n";
        }
    } catch (const std::exception& e) {
        const std::string stage = app.get_subcommands().empty()
                                      ? std::string("snerf")
                                      : app.get_subcommands().front()->get_name();
        std::cerr << "[" << stage << "] error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
