// Bit-exact readers/writers for SemanticKITTI-style scan and label files,
// label remapping, and ASCII PLY export for inspection.
//
// Scan file:  little-endian float32 x,y,z,intensity per point, no header.
// Label file: little-endian uint32 per point; semantic id = value & 0xFFFF,
//             upper 16 bits are an instance id (discarded on read, written
//             as zero).

#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "unimix/cloud.hpp"

namespace unimix {

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw std::runtime_error("read failure on file: " + path);
    return bytes;
}

inline void write_file_bytes(const std::string& path,
                             const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failure on file: " + path);
}

inline std::uint32_t decode_u32_le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void encode_u32_le(std::uint32_t v, std::uint8_t* p) {
    p[0] = static_cast<std::uint8_t>(v & 0xFF);
    p[1] = static_cast<std::uint8_t>((v >> 8) & 0xFF);
    p[2] = static_cast<std::uint8_t>((v >> 16) & 0xFF);
    p[3] = static_cast<std::uint8_t>((v >> 24) & 0xFF);
}

inline float decode_f32_le(const std::uint8_t* p) {
    std::uint32_t bits = decode_u32_le(p);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

inline void encode_f32_le(float f, std::uint8_t* p) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    encode_u32_le(bits, p);
}

}  // namespace detail

// Raw dataset class id -> common class id. Ids absent from the map degrade
// to ignore_id rather than crashing; real label files contain rare ids.
struct RemapTable {
    std::map<std::uint16_t, std::uint16_t> mapping;
    std::uint16_t num_classes = 20;
    std::uint16_t ignore_id = 0;
    bool passthrough = false;  // every raw id maps to itself

    std::uint16_t remap(std::uint16_t raw, bool* known = nullptr) const {
        if (passthrough) {
            if (known) *known = true;
            return raw;
        }
        auto it = mapping.find(raw);
        if (known) *known = (it != mapping.end());
        return it != mapping.end() ? it->second : ignore_id;
    }
};

// For tools that shuttle label files through untouched.
inline RemapTable passthrough_remap() {
    RemapTable t;
    t.passthrough = true;
    t.num_classes = 0xFFFF;
    t.ignore_id = 0;
    return t;
}

// An identity map over [0, num_classes); useful for synthetic data whose
// label files already use the common ids.
inline RemapTable identity_remap(std::uint16_t num_classes,
                                 std::uint16_t ignore_id = 0) {
    RemapTable t;
    t.num_classes = num_classes;
    t.ignore_id = ignore_id;
    for (std::uint16_t c = 0; c < num_classes; ++c) t.mapping[c] = c;
    if (ignore_id >= num_classes) t.mapping[ignore_id] = ignore_id;
    return t;
}

inline std::vector<std::string> semantickitti_class_names() {
    return {"ignore",        "car",        "bicycle",    "motorcycle",
            "truck",         "other-veh",  "person",     "bicyclist",
            "motorcyclist",  "road",       "parking",    "sidewalk",
            "other-ground",  "building",   "fence",      "vegetation",
            "trunk",         "terrain",    "pole",       "traffic-sign"};
}

// The standard SemanticKITTI learning map onto the 19 common classes
// (0 = ignore). Shipped as data/semantickitti_remap.txt; editable.
inline RemapTable semantickitti_remap() {
    RemapTable t;
    t.num_classes = 20;
    t.ignore_id = 0;
    t.mapping = {
        {0, 0},    {1, 0},    {10, 1},  {11, 2},  {13, 5},  {15, 3},
        {16, 5},   {18, 4},   {20, 5},  {30, 6},  {31, 7},  {32, 8},
        {40, 9},   {44, 10},  {48, 11}, {49, 12}, {50, 13}, {51, 14},
        {52, 0},   {60, 9},   {70, 15}, {71, 16}, {72, 17}, {80, 18},
        {81, 19},  {99, 0},   {252, 1}, {253, 7}, {254, 6}, {255, 8},
        {256, 5},  {257, 5},  {258, 4}, {259, 5},
    };
    return t;
}

// Text format: one "raw common" pair per line, '#' starts a comment.
// A "num_classes N" or "ignore I" line overrides the defaults.
inline RemapTable load_remap(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open remap table: " + path);
    RemapTable t;
    t.mapping.clear();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;
        if (first == "num_classes") {
            if (!(ls >> t.num_classes))
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": bad num_classes line");
            continue;
        }
        if (first == "ignore") {
            if (!(ls >> t.ignore_id))
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": bad ignore line");
            continue;
        }
        unsigned raw = 0, common = 0;
        try {
            raw = std::stoul(first);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected numeric raw id, got '" + first + "'");
        }
        if (!(ls >> common))
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": missing common id");
        t.mapping[static_cast<std::uint16_t>(raw)] =
            static_cast<std::uint16_t>(common);
    }
    for (const auto& [raw, common] : t.mapping) {
        if (common >= t.num_classes && common != t.ignore_id)
            throw std::runtime_error(path + ": remap image " + std::to_string(common) +
                                     " outside [0, num_classes)");
    }
    return t;
}

inline PointCloud read_scan(const std::string& path) {
    std::vector<std::uint8_t> bytes = detail::read_file_bytes(path);
    if (bytes.size() % 16 != 0) {
        throw std::runtime_error(
            "truncated scan file '" + path + "': " + std::to_string(bytes.size()) +
            " bytes leave a partial point record at byte offset " +
            std::to_string(bytes.size() - bytes.size() % 16));
    }
    PointCloud cloud;
    cloud.points.resize(bytes.size() / 16);
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const std::uint8_t* rec = bytes.data() + i * 16;
        Point& p = cloud.points[i];
        p.x = detail::decode_f32_le(rec);
        p.y = detail::decode_f32_le(rec + 4);
        p.z = detail::decode_f32_le(rec + 8);
        p.intensity = detail::decode_f32_le(rec + 12);
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
            !std::isfinite(p.intensity)) {
            throw std::runtime_error("scan file '" + path +
                                     "' has non-finite value at point index " +
                                     std::to_string(i));
        }
    }
    return cloud;
}

inline void write_scan(const PointCloud& cloud, const std::string& path) {
    std::vector<std::uint8_t> bytes(cloud.size() * 16);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        std::uint8_t* rec = bytes.data() + i * 16;
        detail::encode_f32_le(cloud.points[i].x, rec);
        detail::encode_f32_le(cloud.points[i].y, rec + 4);
        detail::encode_f32_le(cloud.points[i].z, rec + 8);
        detail::encode_f32_le(cloud.points[i].intensity, rec + 12);
    }
    detail::write_file_bytes(path, bytes);
}

// unmapped_tally, when given, receives the count of raw ids that had no
// remap entry and fell back to ignore.
inline LabelArray read_labels(const std::string& path, const RemapTable& remap,
                              std::size_t* unmapped_tally = nullptr) {
    std::vector<std::uint8_t> bytes = detail::read_file_bytes(path);
    if (bytes.size() % 4 != 0) {
        throw std::runtime_error(
            "truncated label file '" + path + "': " + std::to_string(bytes.size()) +
            " bytes leave a partial record at byte offset " +
            std::to_string(bytes.size() - bytes.size() % 4));
    }
    LabelArray out;
    out.num_classes = remap.num_classes;
    out.ignore_id = remap.ignore_id;
    out.labels.resize(bytes.size() / 4);
    std::size_t unmapped = 0;
    for (std::size_t i = 0; i < out.labels.size(); ++i) {
        std::uint32_t raw = detail::decode_u32_le(bytes.data() + i * 4);
        auto semantic = static_cast<std::uint16_t>(raw & 0xFFFF);
        bool known = false;
        out.labels[i] = remap.remap(semantic, &known);
        if (!known) ++unmapped;
    }
    if (unmapped_tally) *unmapped_tally = unmapped;
    return out;
}

inline void write_labels(const LabelArray& labels, const std::string& path) {
    std::vector<std::uint8_t> bytes(labels.size() * 4);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        detail::encode_u32_le(labels.labels[i], bytes.data() + i * 4);
    }
    detail::write_file_bytes(path, bytes);
}

using Colormap = std::map<std::uint16_t, std::array<std::uint8_t, 3>>;

// Covers the 19 common classes plus ignore; synthetic class ids 0..5 reuse
// the low entries.
inline Colormap default_colormap() {
    return {
        {0, {0, 0, 0}},        {1, {100, 150, 245}},  {2, {100, 230, 245}},
        {3, {30, 60, 150}},    {4, {80, 30, 180}},    {5, {100, 80, 250}},
        {6, {255, 30, 30}},    {7, {255, 40, 200}},   {8, {150, 30, 90}},
        {9, {255, 0, 255}},    {10, {255, 150, 255}}, {11, {75, 0, 75}},
        {12, {175, 0, 75}},    {13, {255, 200, 0}},   {14, {255, 120, 50}},
        {15, {0, 175, 0}},     {16, {135, 60, 0}},    {17, {150, 240, 80}},
        {18, {255, 240, 150}}, {19, {255, 0, 0}},
    };
}

// ASCII PLY with per-vertex position and color; ASCII keeps exports
// diffable.
inline void export_ply(const PointCloud& cloud, const LabelArray& labels,
                       const Colormap& colormap, const std::string& path) {
    if (labels.size() != cloud.size())
        throw std::invalid_argument("export_ply: labels not aligned with cloud");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out << "ply\n"
        << "format ascii 1.0\n"
        << "element vertex " << cloud.size() << "\n"
        << "property float x\n"
        << "property float y\n"
        << "property float z\n"
        << "property uchar red\n"
        << "property uchar green\n"
        << "property uchar blue\n"
        << "end_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        auto it = colormap.find(labels.labels[i]);
        if (it == colormap.end())
            throw std::runtime_error("export_ply: no colormap entry for class " +
                                     std::to_string(labels.labels[i]));
        const auto& c = it->second;
        out << cloud.points[i].x << " " << cloud.points[i].y << " "
            << cloud.points[i].z << " " << int(c[0]) << " " << int(c[1]) << " "
            << int(c[2]) << "\n";
    }
    if (!out) throw std::runtime_error("write failure on file: " + path);
}

}  // namespace unimix
