#pragma once

// Pose sampling on a spherical cap around the ROI and the posed-image
// dataset, stored on disk in the common NeRF transforms.json layout.

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "snerf/camera.hpp"
#include "snerf/image.hpp"
#include "snerf/png_io.hpp"
#include "snerf/raycast.hpp"
#include "snerf/volume.hpp"

namespace snerf {

struct DatasetError : std::runtime_error {
    explicit DatasetError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Provenance { preoperative, stylized, captured };

inline std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::preoperative: return "preoperative";
        case Provenance::stylized: return "stylized";
        default: return "captured";
    }
}

inline Provenance provenance_from_string(const std::string& s) {
    if (s == "preoperative") return Provenance::preoperative;
    if (s == "stylized") return Provenance::stylized;
    if (s == "captured") return Provenance::captured;
    throw DatasetError("unknown provenance tag '" + s + "'");
}

struct PosedFrame {
    CameraPose pose;
    Image image;
};

struct PosedDataset {
    CameraIntrinsics intrinsics;
    std::vector<PosedFrame> frames;
    Provenance provenance = Provenance::preoperative;

    void validate() const {
        intrinsics.validate();
        if (frames.empty()) throw DatasetError("PosedDataset: needs at least one frame");
        for (const auto& f : frames)
            if (f.image.width != intrinsics.width || f.image.height != intrinsics.height)
                throw DatasetError("PosedDataset: frame dims do not match intrinsics");
    }
};

struct PoseSamplingConfig {
    int count = 100;
    double dist_min_mm = 150.0;
    double dist_max_mm = 300.0;
    double cone_half_angle_deg = 30.0;
    double roll_range_deg = 15.0;
    uint64_t seed = 0;
};

// Positions uniform on the spherical cap of the given half-angle about
// roi.outward_normal, at a uniform distance in [dist_min, dist_max]; each
// camera looks at roi.center with a uniform roll in +-roll_range.
inline std::vector<CameraPose> sample_poses(const RoiSpec& roi, const PoseSamplingConfig& cfg) {
    roi.validate();
    if (cfg.count < 0) throw DatasetError("sample_poses: negative count");
    if (!(cfg.dist_min_mm > 0) || cfg.dist_min_mm > cfg.dist_max_mm)
        throw DatasetError("sample_poses: invalid distance range");
    if (cfg.cone_half_angle_deg < 0 || cfg.cone_half_angle_deg > 90)
        throw DatasetError("sample_poses: cone half-angle outside [0,90]");
    if (cfg.roll_range_deg < 0) throw DatasetError("sample_poses: negative roll range");

    // Orthonormal frame with z = outward normal.
    const Eigen::Vector3d n = roi.outward_normal;
    const Eigen::Vector3d a = std::fabs(n.z()) > 0.9 ? Eigen::Vector3d(1, 0, 0) : Eigen::Vector3d(0, 0, 1);
    const Eigen::Vector3d u = n.cross(a).normalized();
    const Eigen::Vector3d v = n.cross(u);

    std::mt19937 rng(uint32_t(cfg.seed));
    const double cos_min = std::cos(deg2rad(cfg.cone_half_angle_deg));

    std::vector<CameraPose> poses;
    poses.reserve(size_t(cfg.count));
    for (int i = 0; i < cfg.count; ++i) {
        // Draw order is fixed: cap direction, azimuth, distance, roll.
        const double ct = uniform_double(rng, cos_min, 1.0);  // uniform area on the cap
        const double phi = uniform_double(rng, 0.0, 2.0 * kPi);
        const double dist = uniform_double(rng, cfg.dist_min_mm, cfg.dist_max_mm);
        const double roll = deg2rad(uniform_double(rng, -cfg.roll_range_deg, cfg.roll_range_deg));

        const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        const Eigen::Vector3d dir = (st * std::cos(phi)) * u + (st * std::sin(phi)) * v + ct * n;
        poses.push_back(look_at(roi.center_mm + dist * dir, roi.center_mm, roll));
    }
    return poses;
}

inline PosedDataset build_dataset(const VoxelVolume& vol, const TransferFunction& tf,
                                  const std::vector<CameraPose>& poses, const CameraIntrinsics& intr,
                                  const RaycastConfig& rcfg = {}) {
    if (poses.empty()) throw DatasetError("build_dataset: no poses");
    PosedDataset ds;
    ds.intrinsics = intr;
    ds.provenance = Provenance::preoperative;
    ds.frames.resize(poses.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < std::int64_t(poses.size()); ++i) {
        ds.frames[i].pose = poses[i];
        ds.frames[i].image = render_volume(vol, tf, poses[i], intr, rcfg);
    }
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Disk layout: <dir>/transforms.json + <dir>/images/NNNN.png

inline void write_dataset(const PosedDataset& ds, const std::string& dir) {
    ds.validate();
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");

    nlohmann::json j;
    const auto& in = ds.intrinsics;
    j["camera_angle_x"] = 2.0 * std::atan(0.5 * in.width / in.fx);
    j["fl_x"] = in.fx;
    j["fl_y"] = in.fy;
    j["cx"] = in.cx;
    j["cy"] = in.cy;
    j["w"] = in.width;
    j["h"] = in.height;
    j["provenance"] = to_string(ds.provenance);
    j["frames"] = nlohmann::json::array();
    for (size_t i = 0; i < ds.frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%04zu.png", i);
        const std::string rel = std::string("./images/") + name;
        nlohmann::json frame;
        frame["file_path"] = rel;
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < 4; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < 4; ++c) row.push_back(ds.frames[i].pose.transform(r, c));
            rows.push_back(row);
        }
        frame["transform_matrix"] = rows;
        j["frames"].push_back(frame);
        write_png((fs::path(dir) / "images" / name).string(), ds.frames[i].image);
    }
    std::ofstream f(fs::path(dir) / "transforms.json");
    if (!f) throw DatasetError("write_dataset: cannot open manifest in " + dir);
    f << j.dump(1) << "\n";
}

inline PosedDataset read_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest = fs::path(dir) / "transforms.json";
    std::ifstream f(manifest);
    if (!f) throw DatasetError("read_dataset: missing manifest " + manifest.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError("read_dataset: malformed manifest " + manifest.string() + ": " + e.what());
    }

    PosedDataset ds;
    try {
        ds.intrinsics.width = j.at("w").get<int>();
        ds.intrinsics.height = j.at("h").get<int>();
        ds.intrinsics.fx = j.contains("fl_x") ? j["fl_x"].get<double>()
                                              : 0.5 * ds.intrinsics.width /
                                                    std::tan(0.5 * j.at("camera_angle_x").get<double>());
        ds.intrinsics.fy = j.value("fl_y", ds.intrinsics.fx);
        ds.intrinsics.cx = j.value("cx", 0.5 * ds.intrinsics.width);
        ds.intrinsics.cy = j.value("cy", 0.5 * ds.intrinsics.height);
        ds.provenance = provenance_from_string(j.value("provenance", "preoperative"));

        for (const auto& frame : j.at("frames")) {
            PosedFrame pf;
            const auto& m = frame.at("transform_matrix");
            if (!m.is_array() || m.size() != 4)
                throw DatasetError("read_dataset: malformed manifest: transform_matrix must be 4x4");
            for (int r = 0; r < 4; ++r) {
                if (!m[r].is_array() || m[r].size() != 4)
                    throw DatasetError("read_dataset: malformed manifest: transform_matrix must be 4x4");
                for (int c = 0; c < 4; ++c) pf.pose.transform(r, c) = m[r][c].get<double>();
            }
            const std::string rel = frame.at("file_path").get<std::string>();
            const fs::path img_path = fs::path(dir) / rel;
            if (!fs::exists(img_path))
                throw DatasetError("read_dataset: frame " + std::to_string(ds.frames.size()) +
                                   " references missing image " + img_path.string());
            pf.image = read_png(img_path.string());
            ds.frames.push_back(std::move(pf));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError("read_dataset: malformed manifest " + manifest.string() + ": " + e.what());
    }
    ds.validate();
    return ds;
}

}  // namespace snerf
