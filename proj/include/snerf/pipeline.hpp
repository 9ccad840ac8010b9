#pragma once

// End-to-end orchestration: phantom/volume -> posed dataset + intraoperative
// target -> stylization -> radiance-field training -> agreement report.
// Every stage materializes its artifact to disk and writes a JSON run
// manifest (inputs, seeds, timings, output hashes) so stages can be rerun or
// ablated independently.

#include <chrono>
#include <filesystem>
#include <fstream>

#include "snerf/dataset.hpp"
#include "snerf/metrics.hpp"
#include "snerf/nerf_train.hpp"
#include "snerf/stylize.hpp"

namespace snerf {

struct PipelineConfig {
    uint64_t seed = 42;
    std::string out_dir = "out";
    bool deterministic = true;

    // volume section
    std::string volume_path;  // empty: generate a phantom
    uint64_t phantom_seed = 42;
    std::array<int, 3> phantom_dims{96, 96, 96};
    TransferFunction preop_tf;
    TransferFunction intraop_tf;
    RaycastConfig raycast;

    // roi section
    bool roi_auto = true;  // place the ROI on the surface along `roi_normal`
    Eigen::Vector3d roi_center{0, 0, 0};
    double roi_diameter_mm = 50.0;
    Eigen::Vector3d roi_normal{0, 0, 1};

    // poses section
    PoseSamplingConfig poses;
    int image_width = 96, image_height = 96;

    // style section
    StyleConfig style;

    // nerf section
    HashGridConfig grid;
    TrainConfig train_cfg;
    RenderConfig render_cfg;

    // eval section
    int n_test_poses = 9;
    uint64_t eval_seed = 9001;
    std::string eval_mode = "mvnerf";  // or "none"
};

inline TransferFunction default_preop_tf() {
    TransferFunction tf;
    tf.control_points = {
        {0.00, {0.0, 0.0, 0.0}, 0.0},  {0.25, {0.35, 0.30, 0.30}, 0.0},
        {0.45, {0.80, 0.70, 0.65}, 1.2}, {0.65, {0.90, 0.80, 0.75}, 2.5},
        {0.85, {0.95, 0.88, 0.82}, 3.0}, {1.00, {1.00, 0.95, 0.90}, 3.0}};
    tf.ambient = 0.30;
    tf.diffuse = 0.70;
    return tf;
}

// A deliberately different appearance for the "intraoperative" view: same
// opacity profile (same geometry), surgical-red palette.
inline TransferFunction default_intraop_tf() {
    TransferFunction tf;
    tf.control_points = {
        {0.00, {0.0, 0.0, 0.0}, 0.0},  {0.25, {0.45, 0.16, 0.13}, 0.0},
        {0.45, {0.78, 0.38, 0.32}, 1.2}, {0.65, {0.88, 0.52, 0.45}, 2.5},
        {0.85, {0.55, 0.10, 0.10}, 3.0}, {1.00, {0.62, 0.13, 0.13}, 3.0}};
    tf.ambient = 0.35;
    tf.diffuse = 0.65;
    return tf;
}

// Marches from the volume boundary toward the center along -normal and puts
// the ROI at the first intensity-threshold crossing (the "surface").
inline RoiSpec auto_roi(const VoxelVolume& vol, const Eigen::Vector3d& normal, double diameter_mm,
                        double threshold = 0.25) {
    const auto ext = vol.extent_mm();
    const Eigen::Vector3d center(vol.origin_mm[0] + 0.5 * ext[0], vol.origin_mm[1] + 0.5 * ext[1],
                                 vol.origin_mm[2] + 0.5 * ext[2]);
    const double reach = 0.5 * std::sqrt(ext[0] * ext[0] + ext[1] * ext[1] + ext[2] * ext[2]);
    const double step = 0.5 * std::min({vol.spacing_mm[0], vol.spacing_mm[1], vol.spacing_mm[2]});
    RoiSpec roi;
    roi.outward_normal = normal.normalized();
    roi.diameter_mm = diameter_mm;
    roi.center_mm = center;  // fallback: volume center
    for (double t = reach; t >= 0; t -= step) {
        const Eigen::Vector3d p = center + t * roi.outward_normal;
        if (sample_trilinear(vol, {p.x(), p.y(), p.z()}) >= threshold) {
            roi.center_mm = p;
            break;
        }
    }
    return roi;
}

// ---------------------------------------------------------------------------
// JSON parsing with exhaustive error collection

namespace pipeline_detail {

inline Eigen::Vector3d vec3_from(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

template <typename F>
void try_field(std::vector<std::string>& errors, const std::string& name, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        errors.push_back(name + ": " + e.what());
    }
}

}  // namespace pipeline_detail

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    using pipeline_detail::try_field;
    using pipeline_detail::vec3_from;
    std::vector<std::string> errors;
    PipelineConfig cfg;
    cfg.preop_tf = default_preop_tf();
    cfg.intraop_tf = default_intraop_tf();

    try_field(errors, "seed", [&] { cfg.seed = j.value("seed", cfg.seed); });
    try_field(errors, "out_dir", [&] { cfg.out_dir = j.value("out_dir", cfg.out_dir); });
    try_field(errors, "deterministic",
              [&] { cfg.deterministic = j.value("deterministic", cfg.deterministic); });

    if (j.contains("volume")) {
        const auto& jv = j["volume"];
        try_field(errors, "volume.path", [&] { cfg.volume_path = jv.value("path", std::string()); });
        if (jv.contains("phantom")) {
            try_field(errors, "volume.phantom.seed",
                      [&] { cfg.phantom_seed = jv["phantom"].value("seed", cfg.phantom_seed); });
            try_field(errors, "volume.phantom.dims", [&] {
                if (jv["phantom"].contains("dims"))
                    for (int a = 0; a < 3; ++a) cfg.phantom_dims[size_t(a)] = jv["phantom"]["dims"].at(size_t(a)).get<int>();
                for (int d : cfg.phantom_dims)
                    if (d < 32) throw std::runtime_error("phantom dims must be >= 32");
            });
        }
        try_field(errors, "volume.transfer_function", [&] {
            if (jv.contains("transfer_function")) cfg.preop_tf = transfer_function_from_json(jv["transfer_function"]);
        });
        try_field(errors, "volume.intraop_transfer_function", [&] {
            if (jv.contains("intraop_transfer_function"))
                cfg.intraop_tf = transfer_function_from_json(jv["intraop_transfer_function"]);
        });
        try_field(errors, "volume.step_mm", [&] {
            cfg.raycast.step_mm = jv.value("step_mm", cfg.raycast.step_mm);
            if (!(cfg.raycast.step_mm > 0)) throw std::runtime_error("must be > 0");
        });
        try_field(errors, "volume.background", [&] {
            if (jv.contains("background"))
                for (int c = 0; c < 3; ++c) cfg.raycast.background[size_t(c)] = jv["background"].at(size_t(c)).get<double>();
        });
    }

    if (j.contains("roi")) {
        const auto& jr = j["roi"];
        try_field(errors, "roi.center_mm", [&] {
            if (jr.contains("center_mm")) {
                cfg.roi_center = vec3_from(jr["center_mm"]);
                cfg.roi_auto = false;
            }
        });
        try_field(errors, "roi.diameter_mm", [&] {
            cfg.roi_diameter_mm = jr.value("diameter_mm", cfg.roi_diameter_mm);
            if (!(cfg.roi_diameter_mm > 0)) throw std::runtime_error("must be > 0");
        });
        try_field(errors, "roi.normal", [&] {
            if (jr.contains("normal")) {
                cfg.roi_normal = vec3_from(jr["normal"]);
                if (cfg.roi_normal.norm() < 1e-9) throw std::runtime_error("normal must be nonzero");
                cfg.roi_normal.normalize();
            }
        });
    }

    if (j.contains("poses")) {
        const auto& jp = j["poses"];
        try_field(errors, "poses.n", [&] {
            cfg.poses.count = jp.value("n", cfg.poses.count);
            if (cfg.poses.count < 0) throw std::runtime_error("must be >= 0");
        });
        try_field(errors, "poses.dist_range_mm", [&] {
            if (jp.contains("dist_range_mm")) {
                cfg.poses.dist_min_mm = jp["dist_range_mm"].at(0).get<double>();
                cfg.poses.dist_max_mm = jp["dist_range_mm"].at(1).get<double>();
            }
            if (!(cfg.poses.dist_min_mm > 0) || cfg.poses.dist_min_mm > cfg.poses.dist_max_mm)
                throw std::runtime_error("need 0 < min <= max");
        });
        try_field(errors, "poses.cone_half_angle_deg", [&] {
            cfg.poses.cone_half_angle_deg = jp.value("cone_half_angle_deg", cfg.poses.cone_half_angle_deg);
            if (cfg.poses.cone_half_angle_deg < 0 || cfg.poses.cone_half_angle_deg > 90)
                throw std::runtime_error("must be in [0,90]");
        });
        try_field(errors, "poses.roll_range_deg", [&] {
            cfg.poses.roll_range_deg = jp.value("roll_range_deg", cfg.poses.roll_range_deg);
            if (cfg.poses.roll_range_deg < 0) throw std::runtime_error("must be >= 0");
        });
        try_field(errors, "poses.seed", [&] { cfg.poses.seed = jp.value("seed", cfg.poses.seed); });
        try_field(errors, "poses.width", [&] {
            cfg.image_width = jp.value("width", cfg.image_width);
            if (cfg.image_width < 8) throw std::runtime_error("must be >= 8");
        });
        try_field(errors, "poses.height", [&] {
            cfg.image_height = jp.value("height", cfg.image_height);
            if (cfg.image_height < 8) throw std::runtime_error("must be >= 8");
        });
    }

    if (j.contains("style")) {
        const auto& js = j["style"];
        try_field(errors, "style.mode",
                  [&] { cfg.style.mode = style_mode_from_string(js.value("mode", "hybrid")); });
        if (js.contains("wct")) {
            const auto& jw = js["wct"];
            try_field(errors, "style.wct.levels",
                      [&] { cfg.style.wct.levels = jw.value("levels", cfg.style.wct.levels); });
            try_field(errors, "style.wct.blend_alpha", [&] {
                if (jw.contains("blend_alpha")) {
                    cfg.style.wct.blend_alpha.clear();
                    if (jw["blend_alpha"].is_array())
                        for (const auto& a : jw["blend_alpha"])
                            cfg.style.wct.blend_alpha.push_back(a.get<double>());
                    else
                        cfg.style.wct.blend_alpha.push_back(jw["blend_alpha"].get<double>());
                }
            });
            try_field(errors, "style.wct.eigen_regularization", [&] {
                cfg.style.wct.eigen_regularization =
                    jw.value("eigen_regularization", cfg.style.wct.eigen_regularization);
            });
            try_field(errors, "style.wct.circular_mask", [&] {
                cfg.style.wct.circular_mask = jw.value("circular_mask", cfg.style.wct.circular_mask);
            });
            try_field(errors, "style.wct", [&] { cfg.style.wct.validate(); });
        }
        if (js.contains("strotss")) {
            const auto& jt = js["strotss"];
            auto& sc = cfg.style.strotss;
            try_field(errors, "style.strotss.iterations",
                      [&] { sc.iterations = jt.value("iterations", sc.iterations); });
            try_field(errors, "style.strotss.scales", [&] { sc.scales = jt.value("scales", sc.scales); });
            try_field(errors, "style.strotss.content_weight",
                      [&] { sc.content_weight = jt.value("content_weight", sc.content_weight); });
            try_field(errors, "style.strotss.style_weight",
                      [&] { sc.style_weight = jt.value("style_weight", sc.style_weight); });
            try_field(errors, "style.strotss.palette_weight",
                      [&] { sc.palette_weight = jt.value("palette_weight", sc.palette_weight); });
            try_field(errors, "style.strotss.feature_samples",
                      [&] { sc.feature_samples = jt.value("feature_samples", sc.feature_samples); });
            try_field(errors, "style.strotss.step_size",
                      [&] { sc.step_size = jt.value("step_size", sc.step_size); });
            try_field(errors, "style.strotss.seed", [&] { sc.seed = jt.value("seed", sc.seed); });
            try_field(errors, "style.strotss.pyramid_levels",
                      [&] { sc.pyramid_levels = jt.value("pyramid_levels", sc.pyramid_levels); });
            try_field(errors, "style.strotss.circular_mask",
                      [&] { sc.circular_mask = jt.value("circular_mask", sc.circular_mask); });
            try_field(errors, "style.strotss", [&] { sc.validate(); });
        }
    }

    if (j.contains("nerf")) {
        const auto& jn = j["nerf"];
        if (jn.contains("grid")) {
            const auto& jg = jn["grid"];
            try_field(errors, "nerf.grid.levels", [&] { cfg.grid.levels = jg.value("levels", cfg.grid.levels); });
            try_field(errors, "nerf.grid.log2_table_size",
                      [&] { cfg.grid.log2_table_size = jg.value("log2_table_size", cfg.grid.log2_table_size); });
            try_field(errors, "nerf.grid.features",
                      [&] { cfg.grid.features = jg.value("features", cfg.grid.features); });
            try_field(errors, "nerf.grid.n_min", [&] { cfg.grid.n_min = jg.value("n_min", cfg.grid.n_min); });
            try_field(errors, "nerf.grid.n_max", [&] { cfg.grid.n_max = jg.value("n_max", cfg.grid.n_max); });
            try_field(errors, "nerf.grid", [&] { cfg.grid.validate(); });
        }
        if (jn.contains("train")) {
            const auto& jt = jn["train"];
            auto& tc = cfg.train_cfg;
            try_field(errors, "nerf.train.iterations",
                      [&] { tc.iterations = jt.value("iterations", tc.iterations); });
            try_field(errors, "nerf.train.rays_per_batch",
                      [&] { tc.rays_per_batch = jt.value("rays_per_batch", tc.rays_per_batch); });
            try_field(errors, "nerf.train.lr_tables", [&] { tc.lr_tables = jt.value("lr_tables", tc.lr_tables); });
            try_field(errors, "nerf.train.lr_mlp", [&] { tc.lr_mlp = jt.value("lr_mlp", tc.lr_mlp); });
            try_field(errors, "nerf.train.beta1", [&] { tc.beta1 = jt.value("beta1", tc.beta1); });
            try_field(errors, "nerf.train.beta2", [&] { tc.beta2 = jt.value("beta2", tc.beta2); });
            try_field(errors, "nerf.train.cosine_decay",
                      [&] { tc.cosine_decay = jt.value("cosine_decay", tc.cosine_decay); });
            try_field(errors, "nerf.train.seed", [&] { tc.seed = jt.value("seed", tc.seed); });
            try_field(errors, "nerf.train.deterministic",
                      [&] { tc.deterministic = jt.value("deterministic", tc.deterministic); });
            try_field(errors, "nerf.train.scene_radius_scale", [&] {
                tc.scene_radius_scale = jt.value("scene_radius_scale", tc.scene_radius_scale);
            });
            try_field(errors, "nerf.train", [&] { tc.validate(); });
        }
        if (jn.contains("render")) {
            const auto& jr = jn["render"];
            auto& rc = cfg.render_cfg;
            try_field(errors, "nerf.render.n_samples",
                      [&] { rc.n_samples = jr.value("n_samples", rc.n_samples); });
            try_field(errors, "nerf.render.near", [&] { rc.near = jr.value("near", rc.near); });
            try_field(errors, "nerf.render.far", [&] { rc.far = jr.value("far", rc.far); });
            try_field(errors, "nerf.render.stratified",
                      [&] { rc.stratified = jr.value("stratified", rc.stratified); });
            try_field(errors, "nerf.render.seed", [&] { rc.seed = jr.value("seed", rc.seed); });
            try_field(errors, "nerf.render.term_eps", [&] { rc.term_eps = jr.value("term_eps", rc.term_eps); });
            try_field(errors, "nerf.render.background", [&] {
                if (jr.contains("background"))
                    for (int c = 0; c < 3; ++c) rc.background[size_t(c)] = jr["background"].at(size_t(c)).get<double>();
            });
            try_field(errors, "nerf.render", [&] { rc.validate(); });
        }
    }

    if (j.contains("eval")) {
        const auto& je = j["eval"];
        try_field(errors, "eval.n_test_poses", [&] {
            cfg.n_test_poses = je.value("n_test_poses", cfg.n_test_poses);
            if (cfg.n_test_poses < 1) throw std::runtime_error("must be >= 1");
        });
        try_field(errors, "eval.seed", [&] { cfg.eval_seed = je.value("seed", cfg.eval_seed); });
        try_field(errors, "eval.mode", [&] {
            cfg.eval_mode = je.value("mode", cfg.eval_mode);
            if (cfg.eval_mode != "mvnerf" && cfg.eval_mode != "none")
                throw std::runtime_error("must be 'mvnerf' or 'none'");
        });
    }

    if (!errors.empty()) {
        std::string msg = "invalid config (" + std::to_string(errors.size()) + " errors):";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return pipeline_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Stage runner

struct PipelineArtifacts {
    std::string volume_json;
    std::string dataset_dir;
    std::string intraop_image;
    std::string stylized_dir;
    std::string model_path;
    std::string mv_dataset_dir;
    std::string mv_model_path;
    std::string report_json;
    MetricsReport report;
};

namespace pipeline_detail {

inline uint64_t file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("manifest hash: cannot open " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return fnv1a64(bytes.data(), bytes.size());
}

inline std::string hash_hex(uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

class StageManifest {
  public:
    StageManifest(std::string stage, std::string dir) : dir_(std::move(dir)) {
        j_["stage"] = std::move(stage);
        start_ = std::chrono::steady_clock::now();
    }
    nlohmann::json& inputs() { return j_["inputs"]; }
    nlohmann::json& seeds() { return j_["seeds"]; }
    void add_output(const std::string& path) { j_["outputs"][path] = hash_hex(file_hash(path)); }
    void add_output_dir(const std::string& dir) {
        namespace fs = std::filesystem;
        std::vector<std::string> files;
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_regular_file()) files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) j_["outputs"][f] = hash_hex(file_hash(f));
    }
    void write() {
        namespace fs = std::filesystem;
        j_["duration_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        fs::create_directories(fs::path(dir_));
        const std::string path =
            (fs::path(dir_) / (j_["stage"].get<std::string>() + ".json")).string();
        std::ofstream f(path);
        f << j_.dump(1) << "\n";
    }

  private:
    std::string dir_;
    nlohmann::json j_;
    std::chrono::steady_clock::time_point start_;
};

}  // namespace pipeline_detail

// Disjoint-seed test poses reuse the training cone (the paper does not state
// the test distribution).
inline std::vector<CameraPose> sample_test_poses(const RoiSpec& roi, const PipelineConfig& cfg) {
    PoseSamplingConfig pc = cfg.poses;
    pc.count = cfg.n_test_poses;
    pc.seed = cfg.eval_seed;
    return sample_poses(roi, pc);
}

inline PipelineArtifacts run_pipeline(const PipelineConfig& cfg, std::ostream& log) {
    namespace fs = std::filesystem;
    using pipeline_detail::StageManifest;
    PipelineArtifacts art;
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    const std::string manifest_dir = (out / "manifests").string();

    // --- volume ---
    VoxelVolume vol;
    {
        StageManifest man("volume", manifest_dir);
        if (!cfg.volume_path.empty()) {
            vol = load_volume(cfg.volume_path);
            man.inputs()["path"] = cfg.volume_path;
        } else {
            vol = gen_phantom(cfg.phantom_seed, cfg.phantom_dims);
            man.seeds()["phantom"] = cfg.phantom_seed;
            man.inputs()["dims"] = cfg.phantom_dims;
        }
        art.volume_json = (out / "volume.json").string();
        save_volume_raw(vol, art.volume_json);
        man.add_output(art.volume_json);
        man.add_output((out / "volume.raw").string());
        man.write();
        log << "[volume] " << vol.dims[0] << "x" << vol.dims[1] << "x" << vol.dims[2] << "\n";
    }

    // --- dataset (+ intraoperative target J) ---
    RoiSpec roi;
    PosedDataset ds;
    CameraIntrinsics intr = CameraIntrinsics::make_default(cfg.image_width, cfg.image_height);
    {
        StageManifest man("dataset", manifest_dir);
        roi = cfg.roi_auto ? auto_roi(vol, cfg.roi_normal, cfg.roi_diameter_mm)
                           : RoiSpec{cfg.roi_center, cfg.roi_diameter_mm, cfg.roi_normal};
        const auto poses = sample_poses(roi, cfg.poses);
        ds = build_dataset(vol, cfg.preop_tf, poses, intr, cfg.raycast);
        art.dataset_dir = (out / "dataset").string();
        write_dataset(ds, art.dataset_dir);

        // One extra view with the intraoperative transfer function plays J.
        PoseSamplingConfig jc = cfg.poses;
        jc.count = 1;
        jc.seed = hash_combine(cfg.poses.seed, 0x1a7090);
        const auto j_pose = sample_poses(roi, jc);
        const Image j_img = render_volume(vol, cfg.intraop_tf, j_pose[0], intr, cfg.raycast);
        art.intraop_image = (out / "intraop.png").string();
        write_png(art.intraop_image, j_img);

        man.seeds()["poses"] = cfg.poses.seed;
        man.inputs()["n_poses"] = cfg.poses.count;
        man.add_output_dir(art.dataset_dir);
        man.add_output(art.intraop_image);
        man.write();
        log << "[dataset] " << ds.frames.size() << " frames at " << intr.width << "x" << intr.height
            << "\n";
    }

    // --- stylize ---
    PosedDataset stylized;
    {
        StageManifest man("stylize", manifest_dir);
        const Image style_img = read_png(art.intraop_image);
        stylized = stylize_dataset(ds, style_img, cfg.style);
        art.stylized_dir = (out / "stylized").string();
        write_dataset(stylized, art.stylized_dir);
        man.inputs()["mode"] = to_string(cfg.style.mode);
        man.seeds()["strotss"] = cfg.style.strotss.seed;
        man.add_output_dir(art.stylized_dir);
        man.write();
        log << "[stylize] mode=" << to_string(cfg.style.mode) << "\n";
    }

    // --- train ---
    RadianceFieldModel<float> model;
    {
        StageManifest man("train", manifest_dir);
        model.encoding.cfg = cfg.grid;
        model.init(cfg.train_cfg.seed);
        fit_scene_box(stylized, cfg.train_cfg.scene_radius_scale, model.encoding.bbox_min,
                      model.encoding.bbox_max);
        model.train_intrinsics = stylized.intrinsics;
        const TrainResult tr = train(model, stylized, cfg.train_cfg, cfg.render_cfg);
        art.model_path = (out / "model.snrf").string();
        save_model(model, art.model_path);
        man.seeds()["train"] = cfg.train_cfg.seed;
        man.inputs()["iterations"] = cfg.train_cfg.iterations;
        man.inputs()["final_loss"] = tr.loss_history.back();
        man.add_output(art.model_path);
        man.write();
        log << "[train] " << cfg.train_cfg.iterations << " iters, final loss "
            << tr.loss_history.back() << " (" << tr.wall_seconds << " s)\n";
    }

    // --- evaluate ---
    if (cfg.eval_mode == "mvnerf") {
        StageManifest man("evaluate", manifest_dir);
        // Reference: a multi-view NeRF trained on true-appearance renders.
        PosedDataset mv = ds;
        {
            std::vector<CameraPose> poses;
            for (const auto& f : ds.frames) poses.push_back(f.pose);
            mv = build_dataset(vol, cfg.intraop_tf, poses, intr, cfg.raycast);
            mv.provenance = Provenance::captured;
        }
        art.mv_dataset_dir = (out / "mv_dataset").string();
        write_dataset(mv, art.mv_dataset_dir);

        RadianceFieldModel<float> mv_model;
        mv_model.encoding.cfg = cfg.grid;
        mv_model.init(cfg.train_cfg.seed);
        fit_scene_box(mv, cfg.train_cfg.scene_radius_scale, mv_model.encoding.bbox_min,
                      mv_model.encoding.bbox_max);
        mv_model.train_intrinsics = mv.intrinsics;
        train(mv_model, mv, cfg.train_cfg, cfg.render_cfg);
        art.mv_model_path = (out / "mv_model.snrf").string();
        save_model(mv_model, art.mv_model_path);

        const auto test_poses = sample_test_poses(roi, cfg);
        std::vector<Image> ours, reference;
        for (const auto& pose : test_poses) {
            ours.push_back(render_view(model, pose, intr, cfg.render_cfg));
            reference.push_back(render_view(mv_model, pose, intr, cfg.render_cfg));
        }
        art.report = evaluate_agreement(ours, reference);
        art.report_json = (out / "report.json").string();
        std::ofstream rf(art.report_json);
        rf << art.report.to_json().dump(1) << "\n";
        std::ofstream tf((out / "report.txt").string());
        tf << art.report.format_table();

        man.seeds()["eval"] = cfg.eval_seed;
        man.inputs()["n_test_poses"] = cfg.n_test_poses;
        man.add_output(art.mv_model_path);
        man.add_output(art.report_json);
        man.write();
        log << "[evaluate] SSIM " << art.report.mean.ssim << "  PSNR " << art.report.mean.psnr_db
            << "  GMS " << art.report.mean.gms << "\n";
    }
    return art;
}

}  // namespace snerf
