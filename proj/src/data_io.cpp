#include "sgs/data_io.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace sgs {

namespace {

std::ifstream open_in(const std::string& path, std::ios::openmode mode) {
    std::ifstream in(path, mode);
    if (!in) throw Error("cannot open for reading: " + path);
    return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode) {
    std::ofstream out(path, mode);
    if (!out) throw Error("cannot open for writing: " + path);
    return out;
}

} // namespace

void save_ply(const GaussianField& field, const std::string& path) {
    std::ofstream out = open_out(path, std::ios::binary);
    const size_t n = field.count();
    out << "ply\nformat binary_little_endian 1.0\n"
        << "element vertex " << n << "\n";
    static const char* kProps[] = {"x",       "y",       "z",       "f_dc_0", "f_dc_1",
                                   "f_dc_2",  "opacity", "scale_0", "scale_1",
                                   "scale_2", "rot_0",   "rot_1",   "rot_2",  "rot_3"};
    for (const char* p : kProps) out << "property double " << p << "\n";
    out << "end_header\n";
    for (size_t i = 0; i < n; ++i) {
        double row[14] = {field.positions[i][0],      field.positions[i][1],
                          field.positions[i][2],      field.colors[i][0],
                          field.colors[i][1],         field.colors[i][2],
                          field.opacity_logits[i],    field.log_scales[i][0],
                          field.log_scales[i][1],     field.log_scales[i][2],
                          field.rotations[i][0],      field.rotations[i][1],
                          field.rotations[i][2],      field.rotations[i][3]};
        out.write(reinterpret_cast<const char*>(row), sizeof(row));
    }
    if (!out) throw Error("write failed: " + path);
}

GaussianField load_ply(const std::string& path) {
    std::ifstream in = open_in(path, std::ios::binary);
    std::string line;
    size_t n = 0;
    std::vector<std::string> props;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "element") {
            std::string what;
            ss >> what >> n;
            if (what != "vertex") throw ParseError("unexpected element: " + what);
        } else if (tok == "property") {
            std::string type, name;
            ss >> type >> name;
            if (type != "double") throw ParseError("expected double property: " + name);
            props.push_back(name);
        } else if (tok == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "binary_little_endian") throw ParseError("unsupported format");
        } else if (tok == "end_header") {
            break;
        }
    }
    if (props.size() != 14) throw ParseError("expected 14 vertex properties");

    GaussianField field;
    field.resize(n);
    std::vector<double> row(props.size());
    for (size_t i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
        if (!in) throw ParseError("truncated vertex data");
        for (size_t p = 0; p < props.size(); ++p) {
            const std::string& name = props[p];
            const double v = row[p];
            if (name == "x") field.positions[i][0] = v;
            else if (name == "y") field.positions[i][1] = v;
            else if (name == "z") field.positions[i][2] = v;
            else if (name == "f_dc_0") field.colors[i][0] = v;
            else if (name == "f_dc_1") field.colors[i][1] = v;
            else if (name == "f_dc_2") field.colors[i][2] = v;
            else if (name == "opacity") field.opacity_logits[i] = v;
            else if (name == "scale_0") field.log_scales[i][0] = v;
            else if (name == "scale_1") field.log_scales[i][1] = v;
            else if (name == "scale_2") field.log_scales[i][2] = v;
            else if (name == "rot_0") field.rotations[i][0] = v;
            else if (name == "rot_1") field.rotations[i][1] = v;
            else if (name == "rot_2") field.rotations[i][2] = v;
            else if (name == "rot_3") field.rotations[i][3] = v;
            else throw ParseError("unknown property: " + name);
        }
    }
    return field;
}

void save_cameras(const std::vector<Camera>& cams, const std::string& path) {
    nlohmann::json doc;
    doc["cameras"] = nlohmann::json::array();
    for (size_t i = 0; i < cams.size(); ++i) {
        const Camera& c = cams[i];
        nlohmann::json j;
        j["id"] = i;
        j["fx"] = c.fx;
        j["fy"] = c.fy;
        j["cx"] = c.cx;
        j["cy"] = c.cy;
        j["width"] = c.width;
        j["height"] = c.height;
        j["rotation"] = {c.rotation[0], c.rotation[1], c.rotation[2], c.rotation[3]};
        j["translation"] = {c.translation[0], c.translation[1], c.translation[2]};
        j["learnable"] = c.learnable;
        j["delta"] = {c.delta[0], c.delta[1], c.delta[2],
                      c.delta[3], c.delta[4], c.delta[5]};
        doc["cameras"].push_back(std::move(j));
    }
    std::ofstream out = open_out(path, std::ios::out);
    out << doc.dump(2) << "\n";
}

std::vector<Camera> load_cameras(const std::string& path) {
    std::ifstream in = open_in(path, std::ios::in);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("camera json: ") + e.what());
    }
    if (!doc.contains("cameras")) throw ParseError("missing field: cameras");
    std::vector<Camera> cams;
    for (const auto& j : doc.at("cameras")) {
        auto field = [&](const char* name) -> const nlohmann::json& {
            if (!j.contains(name)) throw ParseError(std::string("missing field: ") + name);
            return j.at(name);
        };
        Camera c;
        c.fx = field("fx");
        c.fy = field("fy");
        c.cx = field("cx");
        c.cy = field("cy");
        c.width = field("width");
        c.height = field("height");
        for (int i = 0; i < 4; ++i) c.rotation[i] = field("rotation")[i];
        for (int i = 0; i < 3; ++i) c.translation[i] = field("translation")[i];
        c.learnable = j.value("learnable", false);
        if (j.contains("delta"))
            for (int i = 0; i < 6; ++i) c.delta[i] = j.at("delta")[i];
        cams.push_back(c);
    }
    return cams;
}

void save_png(const Image& img, const std::string& path) {
    cv::Mat mat(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            auto q = [&](int c) {
                const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
                return static_cast<uint8_t>(std::lround(v * 255.0));
            };
            // OpenCV stores BGR.
            mat.at<cv::Vec3b>(y, x) = cv::Vec3b(q(2), q(1), q(0));
        }
    if (!cv::imwrite(path, mat)) throw Error("png write failed: " + path);
}

Image load_png(const std::string& path) {
    cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);
    if (mat.empty()) throw Error("png read failed: " + path);
    Image img(mat.cols, mat.rows, 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const cv::Vec3b px = mat.at<cv::Vec3b>(y, x);
            img.at(x, y, 0) = px[2] / 255.0;
            img.at(x, y, 1) = px[1] / 255.0;
            img.at(x, y, 2) = px[0] / 255.0;
        }
    return img;
}

void save_depth_png(const Image& depth, const std::string& path, double max_depth) {
    cv::Mat mat(depth.height, depth.width, CV_16UC1);
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            const double v = std::clamp(depth.at(x, y, 0) / max_depth, 0.0, 1.0);
            mat.at<uint16_t>(y, x) = static_cast<uint16_t>(std::lround(v * 65535.0));
        }
    if (!cv::imwrite(path, mat)) throw Error("png write failed: " + path);
}

Image load_depth_png(const std::string& path, double max_depth) {
    cv::Mat mat = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw Error("png read failed: " + path);
    if (mat.type() != CV_16UC1) throw ParseError("expected 16-bit grayscale: " + path);
    Image img(mat.cols, mat.rows, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            img.at(x, y, 0) = mat.at<uint16_t>(y, x) / 65535.0 * max_depth;
    return img;
}

void save_depth_float(const Image& depth, const std::string& path) {
    std::ofstream out = open_out(path, std::ios::binary);
    const char magic[4] = {'S', 'G', 'D', 'F'};
    const uint32_t header[3] = {static_cast<uint32_t>(depth.width),
                                static_cast<uint32_t>(depth.height), 0u};
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    std::vector<float> row(depth.width);
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x)
            row[x] = static_cast<float>(depth.at(x, y, 0));
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw Error("write failed: " + path);
}

Image load_depth_float(const std::string& path) {
    std::ifstream in = open_in(path, std::ios::binary);
    char magic[4];
    uint32_t header[3];
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || std::memcmp(magic, "SGDF", 4) != 0)
        throw ParseError("bad depth header: " + path);
    Image img(static_cast<int>(header[0]), static_cast<int>(header[1]), 1);
    std::vector<float> row(img.width);
    for (int y = 0; y < img.height; ++y) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!in) throw ParseError("truncated depth payload: " + path);
        for (int x = 0; x < img.width; ++x) img.at(x, y, 0) = row[x];
    }
    return img;
}

SyntheticScene synth_scene(size_t n_splats, size_t n_cameras, int resolution,
                           unsigned seed) {
    SyntheticScene scene;
    scene.seed = seed;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Clustered splats in a unit box: a handful of blobs plus a floor slab,
    // so the renders have real structure (edges, occlusion, depth range).
    GaussianField& gt = scene.ground_truth;
    gt.resize(n_splats);
    const int n_clusters = 6;
    std::vector<Vec3> centers(n_clusters), cluster_color(n_clusters);
    for (int c = 0; c < n_clusters; ++c) {
        centers[c] = Vec3(uni(rng) - 0.5, uni(rng) - 0.5, uni(rng) - 0.5) * 0.8;
        cluster_color[c] = Vec3(uni(rng), uni(rng), uni(rng)) * 4.0 - Vec3(2, 2, 2);
    }
    for (size_t i = 0; i < n_splats; ++i) {
        if (i % 4 == 0) {
            // Floor slab member.
            gt.positions[i] = Vec3(uni(rng) - 0.5, 0.45 + 0.02 * gauss(rng),
                                   uni(rng) - 0.5);
            gt.colors[i] = Vec3(-1.0 + 0.3 * gauss(rng), -0.2 + 0.3 * gauss(rng),
                                0.8 + 0.3 * gauss(rng));
        } else {
            const int c = static_cast<int>(rng() % n_clusters);
            gt.positions[i] = centers[c] + 0.08 * Vec3(gauss(rng), gauss(rng), gauss(rng));
            gt.colors[i] = cluster_color[c] + 0.25 * Vec3(gauss(rng), gauss(rng), gauss(rng));
        }
        gt.log_scales[i] = Vec3(-3.0 + 0.4 * gauss(rng), -3.0 + 0.4 * gauss(rng),
                                -3.0 + 0.4 * gauss(rng));
        Vec4 q(1.0 + 0.3 * gauss(rng), 0.3 * gauss(rng), 0.3 * gauss(rng),
               0.3 * gauss(rng));
        gt.rotations[i] = quat_normalize(q);
        // Activated opacity stays inside (0.3, 1).
        gt.opacity_logits[i] = -0.6 + 3.4 * uni(rng);
    }

    // Camera ring in the y=-0.9 plane facing the origin.
    const double radius = 2.2;
    for (size_t i = 0; i < n_cameras; ++i) {
        const double theta = 2.0 * M_PI * static_cast<double>(i) /
                             static_cast<double>(n_cameras) * 0.5; // half ring
        const Vec3 eye(radius * std::cos(theta), -0.9, radius * std::sin(theta));
        const Vec3 forward = (Vec3::Zero() - eye).normalized();
        Vec3 up(0, -1, 0);
        const Vec3 right = forward.cross(up).normalized();
        up = forward.cross(right).normalized() * -1.0;
        Mat3 R; // world-to-camera rows: right, -up (y down), forward
        R.row(0) = right.transpose();
        R.row(1) = (-up).transpose();
        R.row(2) = forward.transpose();
        Camera cam;
        cam.width = resolution;
        cam.height = resolution;
        cam.fx = cam.fy = 1.2 * resolution;
        cam.cx = resolution / 2.0;
        cam.cy = resolution / 2.0;
        // Matrix -> quaternion via the largest-component branch.
        const double tr = R.trace();
        Vec4 q;
        if (tr > 0) {
            const double s = std::sqrt(tr + 1.0) * 2;
            q = Vec4(0.25 * s, (R(2, 1) - R(1, 2)) / s, (R(0, 2) - R(2, 0)) / s,
                     (R(1, 0) - R(0, 1)) / s);
        } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
            const double s = std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2)) * 2;
            q = Vec4((R(2, 1) - R(1, 2)) / s, 0.25 * s, (R(0, 1) + R(1, 0)) / s,
                     (R(0, 2) + R(2, 0)) / s);
        } else if (R(1, 1) > R(2, 2)) {
            const double s = std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2)) * 2;
            q = Vec4((R(0, 2) - R(2, 0)) / s, (R(0, 1) + R(1, 0)) / s, 0.25 * s,
                     (R(1, 2) + R(2, 1)) / s);
        } else {
            const double s = std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1)) * 2;
            q = Vec4((R(1, 0) - R(0, 1)) / s, (R(0, 2) + R(2, 0)) / s,
                     (R(1, 2) + R(2, 1)) / s, 0.25 * s);
        }
        cam.rotation = quat_normalize(q);
        cam.translation = -(quat_to_matrix(cam.rotation) * eye);
        scene.cameras.push_back(cam);
    }

    scene.background = Vec3(0.05, 0.05, 0.08);
    for (const Camera& cam : scene.cameras) {
        RenderOutput out = render(gt, cam, scene.background);
        scene.images.push_back(std::move(out.rgb));
        scene.depths.push_back(std::move(out.depth));
        scene.alphas.push_back(std::move(out.alpha));
    }

    // Sparse training split: 3 roughly evenly spaced views; rest held out.
    const size_t stride = std::max<size_t>(1, n_cameras / 3);
    for (size_t i = 0; i < n_cameras; ++i) {
        if (i % stride == 0 && scene.train_split.size() < 3)
            scene.train_split.push_back(i);
        else
            scene.holdout_split.push_back(i);
    }

    // Initial points: a noisy 25% subsample of the ground-truth positions.
    std::vector<size_t> perm(n_splats);
    std::iota(perm.begin(), perm.end(), 0u);
    for (size_t i = n_splats; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
    const size_t n_init = std::max<size_t>(8, n_splats / 4);
    GaussianField& init = scene.initial_points;
    init.resize(n_init);
    for (size_t i = 0; i < n_init; ++i) {
        const size_t src = perm[i];
        init.positions[i] =
            gt.positions[src] + 0.02 * Vec3(gauss(rng), gauss(rng), gauss(rng));
        init.log_scales[i] = Vec3(-2.6, -2.6, -2.6);
        init.rotations[i] = Vec4(1, 0, 0, 0);
        init.opacity_logits[i] = 0.0; // sigmoid -> 0.5
        init.colors[i] = Vec3::Zero(); // mid-gray
    }
    return scene;
}

uint64_t hash_file(const std::string& path) {
    std::ifstream in = open_in(path, std::ios::binary);
    uint64_t hash = 14695981039346656037ull;
    char buffer[65536];
    while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buffer[i]);
            hash *= 1099511628211ull;
        }
        if (!in) break;
    }
    return hash;
}

} // namespace sgs
