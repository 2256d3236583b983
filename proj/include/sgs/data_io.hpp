#pragma once

#include "sgs/image.hpp"
#include "sgs/renderer.hpp"
#include "sgs/scene.hpp"

#include <string>
#include <vector>

namespace sgs {

// 3DGS-convention PLY interchange: binary little endian, double properties
// x,y,z, f_dc_0..2, opacity, scale_0..2, rot_0..3 (pre-activation values).
void save_ply(const GaussianField& field, const std::string& path);
GaussianField load_ply(const std::string& path);

// One JSON document with a list of camera records.
void save_cameras(const std::vector<Camera>& cams, const std::string& path);
std::vector<Camera> load_cameras(const std::string& path);

// 8-bit RGB PNG; values clamped to [0,1] and quantized.
void save_png(const Image& img, const std::string& path);
Image load_png(const std::string& path);

// 16-bit single-channel PNG; linear mapping value = depth / max_depth * 65535.
void save_depth_png(const Image& depth, const std::string& path, double max_depth);
Image load_depth_png(const std::string& path, double max_depth);

// 32-bit float binary with a 16-byte header: magic "SGDF", u32 width,
// u32 height, u32 reserved; row-major float32 payload.
void save_depth_float(const Image& depth, const std::string& path);
Image load_depth_float(const std::string& path);

struct SyntheticScene {
    GaussianField ground_truth;
    std::vector<Camera> cameras;      // full ring
    std::vector<Image> images;        // renders of the ground truth
    std::vector<Image> depths;        // H x W x 1
    std::vector<Image> alphas;        // H x W x 1
    std::vector<size_t> train_split;  // indices into cameras
    std::vector<size_t> holdout_split;
    GaussianField initial_points;     // noisy 25% subsample of the GT positions
    Vec3 background = Vec3::Zero();
    unsigned seed = 0;
};

// Deterministic synthetic scene: clustered splats in a unit box, a camera
// ring facing the centroid, self-consistent renders from the project's own
// renderer, and a sparse every-k-th train split with 3 training views.
SyntheticScene synth_scene(size_t n_splats, size_t n_cameras, int resolution,
                           unsigned seed);

// FNV-1a over a file's bytes, for run manifests.
uint64_t hash_file(const std::string& path);

} // namespace sgs
