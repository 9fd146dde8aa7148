#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "vsnet/corpus.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vsnet {

namespace {

std::string frame_stem(int index) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%03d", index);
    return buf;
}

bool digits_only(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

Quad parse_quad_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("missing annotation " + path.string());
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("quad"))
        throw std::runtime_error(path.string() + ": no \"quad\" field");
    const json& q = doc["quad"];
    if (!q.is_array() || q.size() != 4)
        throw std::runtime_error(path.string() + ": quad must have 4 vertices");
    Quad quad;
    for (int i = 0; i < 4; ++i) {
        const json& v = q[i];
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            throw std::runtime_error(path.string() + ": quad vertex must be [x, y]");
        quad[i] = {v[0].get<double>(), v[1].get<double>()};
    }
    return quad;
}

Image to_rgb(Image img) {
    if (img.channels == 3) return img;
    Image rgb = make_image(img.h, img.w, 3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = img.at(y, x, 0);
    return rgb;
}

}  // namespace

void save_midv_dir(const Dataset& dataset, const std::string& root) {
    for (const VideoSample& video : dataset) {
        if (video.id.empty()) throw std::invalid_argument("save_midv_dir: empty video id");
        if (video.frames.size() != video.quads.size())
            throw std::invalid_argument("save_midv_dir: frames/quads length mismatch");
        fs::path base = fs::path(root) / video.id;
        fs::create_directories(base / "frames");
        fs::create_directories(base / "gt");
        for (std::size_t i = 0; i < video.frames.size(); ++i) {
            std::string stem = frame_stem(static_cast<int>(i));
            write_png((base / "frames" / (stem + ".png")).string(), video.frames[i]);
            json doc;
            doc["quad"] = json::array();
            for (const Point& p : video.quads[i])
                doc["quad"].push_back(json::array({p.x, p.y}));
            std::ofstream os(base / "gt" / (stem + ".json"));
            if (!os) throw std::runtime_error("save_midv_dir: cannot write annotation");
            os << doc.dump(2) << "\n";
        }
    }
}

Dataset load_midv_dir(const std::string& root) {
    fs::path base(root);
    if (!fs::is_directory(base))
        throw std::runtime_error("load_midv_dir: " + root + " is not a directory");

    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(base))
        if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    std::sort(ids.begin(), ids.end());  // independent of enumeration order

    Dataset dataset;
    for (const std::string& id : ids) {
        fs::path frames_dir = base / id / "frames";
        fs::path gt_dir = base / id / "gt";
        if (!fs::is_directory(frames_dir))
            throw std::runtime_error("load_midv_dir: missing " + frames_dir.string());

        // numeric stem sort, not lexicographic
        std::vector<std::pair<long, fs::path>> frame_files;
        for (const auto& entry : fs::directory_iterator(frames_dir)) {
            if (!entry.is_regular_file()) continue;
            std::string ext = entry.path().extension().string();
            if (ext != ".png" && ext != ".pgm" && ext != ".ppm") continue;
            std::string stem = entry.path().stem().string();
            if (!digits_only(stem))
                throw std::runtime_error("load_midv_dir: non-numeric frame name " +
                                         entry.path().string());
            frame_files.emplace_back(std::stol(stem), entry.path());
        }
        std::sort(frame_files.begin(), frame_files.end());

        VideoSample video;
        video.id = id;
        video.attribute = attribute_from_id(id);
        for (const auto& [num, path] : frame_files) {
            Image frame = to_rgb(read_image(path.string()));
            if (!video.frames.empty() &&
                (frame.h != video.frames[0].h || frame.w != video.frames[0].w))
                throw std::runtime_error("load_midv_dir: size mismatch at " +
                                         path.string());
            Quad quad = parse_quad_json(gt_dir / (path.stem().string() + ".json"));
            video.masks.push_back(rasterize_quad(quad, frame.h, frame.w));
            video.quads.push_back(quad);
            video.frames.push_back(std::move(frame));
        }
        if (!video.frames.empty()) dataset.push_back(std::move(video));
    }
    return dataset;
}

}  // namespace vsnet
