#include "massnet/data_model.hpp"

#include "massnet/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace massnet {

// ---------------------------------------------------------------------------
// PressureFrame
// ---------------------------------------------------------------------------
PressureFrame::PressureFrame(int rows, int cols, double fill) : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0) {
        throw FormatError("pressure frame dimensions must be positive, got " +
                          std::to_string(rows) + "x" + std::to_string(cols));
    }
    values_.assign(static_cast<std::size_t>(rows) * cols, fill);
}

PressureFrame::PressureFrame(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows <= 0 || cols <= 0) {
        throw FormatError("pressure frame dimensions must be positive, got " +
                          std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (values_.size() != static_cast<std::size_t>(rows) * cols) {
        throw FormatError("pressure frame holds " + std::to_string(values_.size()) +
                          " values, expected " + std::to_string(rows * cols));
    }
}

double PressureFrame::sum() const {
    return std::accumulate(values_.begin(), values_.end(), 0.0);
}

double PressureFrame::max() const {
    if (values_.empty()) return 0.0;
    return *std::max_element(values_.begin(), values_.end());
}

void PressureFrame::validate() const {
    if (rows_ <= 0 || cols_ <= 0) throw FormatError("empty pressure frame");
    for (double v : values_) {
        if (!std::isfinite(v) || v < 0.0) {
            throw FormatError("pressure frame contains an invalid value " + std::to_string(v));
        }
    }
}

bool JointSet::outside(int rows, int cols) const {
    return std::any_of(coords.begin(), coords.end(), [&](const JointCoord& j) {
        return j.row < 0.0 || j.col < 0.0 || j.row > rows - 1 || j.col > cols - 1;
    });
}

// ---------------------------------------------------------------------------
// Enums
// ---------------------------------------------------------------------------
std::string_view to_string(Posture p) {
    switch (p) {
        case Posture::supine: return "supine";
        case Posture::left_side: return "left_side";
        case Posture::right_side: return "right_side";
        case Posture::prone: return "prone";
        case Posture::other: return "other";
    }
    return "other";
}

Posture posture_from_string(std::string_view s) {
    if (s == "supine") return Posture::supine;
    if (s == "left_side") return Posture::left_side;
    if (s == "right_side") return Posture::right_side;
    if (s == "prone") return Posture::prone;
    if (s == "other") return Posture::other;
    throw FormatError("unknown posture '" + std::string(s) + "'");
}

std::string_view posture_group(Posture p) {
    switch (p) {
        case Posture::supine: return "supine";
        case Posture::left_side:
        case Posture::right_side: return "side";
        case Posture::prone: return "prone";
        case Posture::other: return "other";
    }
    return "other";
}

std::string_view to_string(FormatId f) {
    switch (f) {
        case FormatId::slp_pm: return "slp_pm";
        case FormatId::massnet_static: return "massnet_static";
        case FormatId::massnet_dynamic: return "massnet_dynamic";
        case FormatId::synthetic: return "synthetic";
    }
    return "synthetic";
}

FormatId format_from_string(std::string_view s) {
    if (s == "slp_pm") return FormatId::slp_pm;
    if (s == "massnet_static") return FormatId::massnet_static;
    if (s == "massnet_dynamic") return FormatId::massnet_dynamic;
    if (s == "synthetic") return FormatId::synthetic;
    throw FormatError("unknown dataset format '" + std::string(s) + "'");
}

std::string_view to_string(SplitStrategy s) {
    switch (s) {
        case SplitStrategy::weight_binned: return "weight_binned";
        case SplitStrategy::loso: return "loso";
        case SplitStrategy::random_kfold: return "random_kfold";
    }
    return "random_kfold";
}

SplitStrategy split_strategy_from_string(std::string_view s) {
    if (s == "weight_binned") return SplitStrategy::weight_binned;
    if (s == "loso") return SplitStrategy::loso;
    if (s == "random_kfold") return SplitStrategy::random_kfold;
    throw ConfigError("unknown split strategy '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Sample / Dataset
// ---------------------------------------------------------------------------
void Sample::validate() const {
    frame.validate();
    if (!(weight_kg > 0.0 && weight_kg < 500.0)) {
        throw FormatError("sample weight " + std::to_string(weight_kg) + " kg outside (0, 500)");
    }
    if (joints) {
        for (const auto& j : joints->coords) {
            if (!std::isfinite(j.row) || !std::isfinite(j.col)) {
                throw FormatError("joint coordinates must be finite");
            }
        }
    }
}

Dataset::Dataset(FormatId format, std::vector<Sample> samples)
    : format_(format), samples_(std::move(samples)) {
    for (const auto& s : samples_) subjects_.insert(s.subject_id);
}

std::vector<std::size_t> Dataset::indices_of_subject(const std::string& subject) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        if (samples_[i].subject_id == subject) out.push_back(i);
    }
    return out;
}

double Dataset::max_value() const {
    double m = 0.0;
    for (const auto& s : samples_) m = std::max(m, s.frame.max());
    return m;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    std::vector<Sample> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= samples_.size()) throw ArgumentError("subset index out of range");
        out.push_back(samples_[i]);
    }
    return Dataset(format_, std::move(out));
}

// ---------------------------------------------------------------------------
// CSV frames
// ---------------------------------------------------------------------------
namespace {

std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace

PressureFrame read_frame_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open frame file " + path.string());

    std::vector<double> values;
    int rows = 0;
    int cols = -1;
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        int count = 0;
        const char* p = t.data();
        const char* end = t.data() + t.size();
        while (p <= end) {
            const char* comma = std::find(p, end, ',');
            std::string cell = trim(std::string_view(p, static_cast<std::size_t>(comma - p)));
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size()) {
                throw LoadError("corrupt value '" + cell + "' in " + path.string());
            }
            if (!std::isfinite(v) || v < 0.0) {
                throw FormatError("negative or non-finite value in " + path.string());
            }
            values.push_back(v);
            ++count;
            p = comma + 1;
            if (comma == end) break;
        }
        if (cols < 0) {
            cols = count;
        } else if (count != cols) {
            throw FormatError("ragged row " + std::to_string(rows) + " in " + path.string());
        }
        ++rows;
    }
    if (rows == 0) throw LoadError("empty frame file " + path.string());
    return PressureFrame(rows, cols, std::move(values));
}

void write_frame_csv(const PressureFrame& frame, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write frame file " + path.string());
    for (int r = 0; r < frame.rows(); ++r) {
        for (int c = 0; c < frame.cols(); ++c) {
            if (c) out << ',';
            out << format_double(frame.at(r, c));
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// NPY
// ---------------------------------------------------------------------------
NpyArray read_npy(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
        throw LoadError("not a .npy file: " + path.string());
    }
    unsigned char version[2];
    in.read(reinterpret_cast<char*>(version), 2);
    std::uint32_t header_len = 0;
    if (version[0] == 1) {
        unsigned char b[2];
        in.read(reinterpret_cast<char*>(b), 2);
        header_len = b[0] | (b[1] << 8);
    } else {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) throw LoadError("truncated .npy header in " + path.string());

    auto field = [&](const std::string& key) {
        auto pos = header.find("'" + key + "'");
        if (pos == std::string::npos) throw LoadError("missing '" + key + "' in " + path.string());
        return header.find(':', pos) + 1;
    };
    std::size_t p = field("descr");
    auto q1 = header.find('\'', p);
    auto q2 = header.find('\'', q1 + 1);
    const std::string descr = header.substr(q1 + 1, q2 - q1 - 1);
    p = field("fortran_order");
    const bool fortran = header.compare(header.find_first_not_of(' ', p), 4, "True") == 0;
    p = field("shape");
    auto lp = header.find('(', p);
    auto rp = header.find(')', lp);
    NpyArray arr;
    std::stringstream ss(header.substr(lp + 1, rp - lp - 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) arr.shape.push_back(std::stoull(tok));
    }
    std::size_t n = 1;
    for (auto d : arr.shape) n *= d;

    if (descr.size() < 3 || descr[0] == '>') {
        throw LoadError("unsupported .npy dtype '" + descr + "' in " + path.string());
    }
    const char kind = descr[1];
    const int width = std::stoi(descr.substr(2));
    std::vector<char> raw(n * static_cast<std::size_t>(width));
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!in) throw LoadError("truncated .npy payload in " + path.string());

    std::vector<double> flat(n);
    for (std::size_t i = 0; i < n; ++i) {
        const char* src = raw.data() + i * width;
        double v = 0.0;
        if (kind == 'f' && width == 8) {
            std::memcpy(&v, src, 8);
        } else if (kind == 'f' && width == 4) {
            float f;
            std::memcpy(&f, src, 4);
            v = f;
        } else if (kind == 'u' && width == 1) {
            v = static_cast<unsigned char>(*src);
        } else if (kind == 'u' && width == 2) {
            std::uint16_t u;
            std::memcpy(&u, src, 2);
            v = u;
        } else if (kind == 'i' && width == 2) {
            std::int16_t u;
            std::memcpy(&u, src, 2);
            v = u;
        } else if (kind == 'i' && width == 4) {
            std::int32_t u;
            std::memcpy(&u, src, 4);
            v = u;
        } else if (kind == 'i' && width == 8) {
            std::int64_t u;
            std::memcpy(&u, src, 8);
            v = static_cast<double>(u);
        } else {
            throw LoadError("unsupported .npy dtype '" + descr + "' in " + path.string());
        }
        flat[i] = v;
    }
    if (fortran && arr.shape.size() == 2) {
        const std::size_t r = arr.shape[0], c = arr.shape[1];
        arr.values.resize(n);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) arr.values[i * c + j] = flat[j * r + i];
    } else {
        arr.values = std::move(flat);
    }
    return arr;
}

void write_npy(const fs::path& path, const std::vector<std::size_t>& shape,
               std::span<const double> values) {
    std::string shape_str = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        shape_str += std::to_string(shape[i]);
        if (shape.size() == 1 || i + 1 < shape.size()) shape_str += ",";
        if (i + 1 < shape.size()) shape_str += " ";
    }
    shape_str += ")";
    std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape_str + ", }";
    const std::size_t total = 10 + header.size() + 1;
    header.append((64 - total % 64) % 64, ' ');
    header += '\n';
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out.write("\x93NUMPY\x01\x00", 8);
    const auto len = static_cast<std::uint16_t>(header.size());
    const char lb[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
    out.write(lb, 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
}

// ---------------------------------------------------------------------------
// Dataset loading
// ---------------------------------------------------------------------------
namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw LoadError("corrupt JSON in " + path.string() + ": " + e.what());
    }
}

bool directory_has_entries(const fs::path& root) {
    return fs::exists(root) && fs::is_directory(root) && fs::directory_iterator(root) != fs::directory_iterator();
}

Dataset load_native(const fs::path& root, FormatId declared) {
    const fs::path meta_path = root / "meta.json";
    if (!fs::exists(meta_path)) {
        if (!directory_has_entries(root / "frames")) {
            throw LoadError("no samples found in " + root.string());
        }
        throw LoadError("missing meta.json in " + root.string());
    }
    const json meta = read_json(meta_path);
    try {
        const FormatId fmt = format_from_string(meta.at("format_id").get<std::string>());
        if (fmt != declared) {
            throw FormatError("dataset at " + root.string() + " declares format '" +
                              std::string(to_string(fmt)) + "', expected '" +
                              std::string(to_string(declared)) + "'");
        }
        const int rows = meta.at("rows").get<int>();
        const int cols = meta.at("cols").get<int>();
        std::optional<double> pitch_r, pitch_c;
        if (meta.contains("pitch_row_m")) pitch_r = meta["pitch_row_m"].get<double>();
        if (meta.contains("pitch_col_m")) pitch_c = meta["pitch_col_m"].get<double>();

        std::map<std::string, double> subject_weight;
        for (const auto& [id, entry] : meta.at("subjects").items()) {
            subject_weight[id] = entry.at("weight_kg").get<double>();
        }
        const auto& entries = meta.at("samples");
        if (entries.empty()) throw LoadError("no samples found in " + root.string());

        std::vector<Sample> samples;
        samples.reserve(entries.size());
        for (const auto& e : entries) {
            const std::string id = e.at("id").get<std::string>();
            Sample s;
            s.subject_id = e.at("subject_id").get<std::string>();
            if (e.contains("weight_kg")) {
                s.weight_kg = e["weight_kg"].get<double>();
            } else {
                auto it = subject_weight.find(s.subject_id);
                if (it == subject_weight.end()) {
                    throw FormatError("subject '" + s.subject_id + "' missing from subject table in " +
                                      meta_path.string());
                }
                s.weight_kg = it->second;
            }
            s.posture = posture_from_string(e.value("posture", std::string("other")));
            if (e.contains("timestamp")) s.timestamp = e["timestamp"].get<std::int64_t>();

            const fs::path frame_path = root / "frames" / (id + ".csv");
            s.frame = read_frame_csv(frame_path);
            if (s.frame.rows() != rows || s.frame.cols() != cols) {
                throw FormatError("frame " + frame_path.string() + " is " + std::to_string(s.frame.rows()) +
                                  "x" + std::to_string(s.frame.cols()) + ", dataset declares " +
                                  std::to_string(rows) + "x" + std::to_string(cols));
            }
            s.frame.pitch_row_m = pitch_r;
            s.frame.pitch_col_m = pitch_c;

            const fs::path joints_path = root / "joints" / (id + ".json");
            if (fs::exists(joints_path)) {
                const json j = read_json(joints_path);
                JointSet js;
                for (const auto& pair : j) {
                    if (!pair.is_array() || pair.size() != 2) {
                        throw LoadError("corrupt joint entry in " + joints_path.string());
                    }
                    js.coords.push_back({pair[0].get<double>(), pair[1].get<double>()});
                }
                s.joints = std::move(js);
            }
            s.validate();
            samples.push_back(std::move(s));
        }
        return Dataset(fmt, std::move(samples));
    } catch (const json::exception& e) {
        throw LoadError("malformed meta.json in " + root.string() + ": " + e.what());
    }
}

Posture slp_posture(std::size_t frame_index) {
    // 45 poses per subject: the first 15 supine, then left and right side.
    const std::size_t k = frame_index % 45;
    if (k < 15) return Posture::supine;
    if (k < 30) return Posture::left_side;
    return Posture::right_side;
}

Dataset load_slp(const fs::path& root) {
    const fs::path physique_path = root / "physiqueData.npy";
    std::vector<fs::path> subject_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "PMarray")) subject_dirs.push_back(entry.path());
    }
    std::sort(subject_dirs.begin(), subject_dirs.end());
    if (subject_dirs.empty()) throw LoadError("no samples found in " + root.string());
    if (!fs::exists(physique_path)) throw LoadError("missing " + physique_path.string());
    const NpyArray physique = read_npy(physique_path);
    if (physique.shape.size() != 2 || physique.shape[1] <= kSlpWeightColumn) {
        throw FormatError("unexpected physiqueData shape in " + physique_path.string());
    }

    std::vector<Sample> samples;
    for (const auto& dir : subject_dirs) {
        const std::string name = dir.filename().string();
        std::size_t subject_index = 0;
        auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), subject_index);
        if (ec != std::errc() || subject_index == 0 || subject_index > physique.shape[0]) {
            throw FormatError("subject directory " + dir.string() + " has no physique row");
        }
        const double weight = physique.values[(subject_index - 1) * physique.shape[1] + kSlpWeightColumn];

        fs::path cover = dir / "PMarray" / "uncover";
        if (!fs::exists(cover)) {
            for (const auto& e : fs::directory_iterator(dir / "PMarray")) {
                if (e.is_directory()) {
                    cover = e.path();
                    break;
                }
            }
        }
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(cover)) {
            if (e.path().extension() == ".npy") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (std::size_t k = 0; k < files.size(); ++k) {
            const NpyArray a = read_npy(files[k]);
            if (a.shape.size() != 2 || a.shape[0] != 192 || a.shape[1] != 84) {
                throw FormatError("SLP frame " + files[k].string() + " is not 192x84");
            }
            Sample s;
            s.frame = PressureFrame(192, 84, a.values);
            for (double& v : s.frame.values()) v = std::max(v, 0.0);
            s.frame.pitch_row_m = 0.01;
            s.frame.pitch_col_m = 0.01;
            s.subject_id = name;
            s.weight_kg = weight;
            s.posture = slp_posture(k);
            s.validate();
            samples.push_back(std::move(s));
        }
    }
    if (samples.empty()) throw LoadError("no samples found in " + root.string());
    return Dataset(FormatId::slp_pm, std::move(samples));
}

}  // namespace

Dataset load_dataset(const fs::path& root, FormatId format) {
    if (!fs::exists(root) || !fs::is_directory(root)) {
        throw LoadError("dataset root does not exist: " + root.string());
    }
    if (!directory_has_entries(root)) throw LoadError("no samples found in " + root.string());
    if (format == FormatId::slp_pm) return load_slp(root);
    return load_native(root, format);
}

void save_dataset(const Dataset& dataset, const fs::path& root) {
    if (dataset.empty()) throw ArgumentError("refusing to write an empty dataset");
    fs::create_directories(root / "frames");
    const auto& first = dataset[0].frame;

    json meta;
    meta["format_id"] = std::string(to_string(dataset.format()));
    meta["rows"] = first.rows();
    meta["cols"] = first.cols();
    if (first.pitch_row_m) meta["pitch_row_m"] = *first.pitch_row_m;
    if (first.pitch_col_m) meta["pitch_col_m"] = *first.pitch_col_m;

    json subjects = json::object();
    json entries = json::array();
    const int width = std::max<int>(6, static_cast<int>(std::to_string(dataset.size()).size()));
    bool any_joints = false;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Sample& s = dataset[i];
        std::string id = std::to_string(i);
        id.insert(0, static_cast<std::size_t>(width) - id.size(), '0');

        if (!subjects.contains(s.subject_id)) subjects[s.subject_id] = {{"weight_kg", s.weight_kg}};
        json e = {{"id", id}, {"subject_id", s.subject_id}, {"posture", std::string(to_string(s.posture))}};
        if (subjects[s.subject_id]["weight_kg"].get<double>() != s.weight_kg) e["weight_kg"] = s.weight_kg;
        if (s.timestamp) e["timestamp"] = *s.timestamp;
        entries.push_back(std::move(e));

        write_frame_csv(s.frame, root / "frames" / (id + ".csv"));
        if (s.joints) {
            if (!any_joints) fs::create_directories(root / "joints");
            any_joints = true;
            json j = json::array();
            for (const auto& c : s.joints->coords) j.push_back({c.row, c.col});
            std::ofstream(root / "joints" / (id + ".json")) << j.dump();
        }
    }
    meta["subjects"] = std::move(subjects);
    meta["samples"] = std::move(entries);
    std::ofstream out(root / "meta.json");
    if (!out) throw LoadError("cannot write " + (root / "meta.json").string());
    out << meta.dump(1);
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------
namespace {

std::vector<std::size_t> indices_for(const Dataset& dataset, const std::set<std::string>& subjects) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (subjects.count(dataset[i].subject_id)) out.push_back(i);
    }
    return out;
}

}  // namespace

SplitSpec split_weight_binned(const Dataset& dataset, int n_bins, std::uint64_t seed,
                              std::optional<int> n_test) {
    if (n_bins < 1) throw SplitError("n_bins must be positive");
    std::map<std::string, double> weight_of;
    for (const auto& s : dataset.samples()) {
        auto [it, inserted] = weight_of.emplace(s.subject_id, s.weight_kg);
        if (!inserted && it->second != s.weight_kg) {
            throw SplitError("subject '" + s.subject_id + "' has inconsistent weights");
        }
    }
    const int n_subjects = static_cast<int>(weight_of.size());
    if (n_subjects < 2 * n_bins) {
        throw SplitError("weight-binned split needs at least " + std::to_string(2 * n_bins) +
                         " subjects, dataset has " + std::to_string(n_subjects));
    }
    const int want_test =
        n_test.value_or(std::max(1, static_cast<int>(std::lround(n_subjects * 8.0 / 102.0))));
    if (want_test < 0 || want_test + n_bins > n_subjects - 1) {
        throw SplitError("requested test size leaves no training subjects");
    }

    double lo = weight_of.begin()->second, hi = lo;
    for (const auto& [id, w] : weight_of) {
        lo = std::min(lo, w);
        hi = std::max(hi, w);
    }
    const double width = (hi - lo) / n_bins;
    std::vector<std::vector<std::string>> bins(static_cast<std::size_t>(n_bins));
    for (const auto& [id, w] : weight_of) {
        int b = width > 0.0 ? static_cast<int>(std::floor((w - lo) / width)) : 0;
        bins[static_cast<std::size_t>(std::clamp(b, 0, n_bins - 1))].push_back(id);
    }
    std::mt19937_64 rng(seed);
    for (auto& bin : bins) std::shuffle(bin.begin(), bin.end(), rng);

    auto most_populous = [&]() {
        std::size_t best = 0;
        for (std::size_t b = 1; b < bins.size(); ++b) {
            if (bins[b].size() > bins[best].size()) best = b;
        }
        return best;
    };

    std::set<std::string> val, test;
    int val_deficit = 0;
    for (auto& bin : bins) {
        if (bin.empty()) {
            ++val_deficit;
            continue;
        }
        val.insert(bin.back());
        bin.pop_back();
    }
    for (; val_deficit > 0; --val_deficit) {
        auto& bin = bins[most_populous()];
        val.insert(bin.back());
        bin.pop_back();
    }

    // One test subject from each of the most populous bins, then greedy.
    std::vector<std::size_t> order(bins.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return bins[a].size() > bins[b].size(); });
    int taken = 0;
    for (std::size_t b : order) {
        if (taken == want_test) break;
        if (bins[b].empty()) continue;
        test.insert(bins[b].back());
        bins[b].pop_back();
        ++taken;
    }
    for (; taken < want_test; ++taken) {
        auto& bin = bins[most_populous()];
        test.insert(bin.back());
        bin.pop_back();
    }

    std::set<std::string> train;
    for (const auto& bin : bins) train.insert(bin.begin(), bin.end());

    SplitSpec spec;
    spec.strategy = SplitStrategy::weight_binned;
    spec.seed = seed;
    spec.train = indices_for(dataset, train);
    spec.val = indices_for(dataset, val);
    spec.test = indices_for(dataset, test);
    return spec;
}

SplitSpec split_loso(const Dataset& dataset, const std::string& held_subject) {
    if (!dataset.subjects().count(held_subject)) {
        throw SplitError("subject '" + held_subject + "' is not in the dataset");
    }
    SplitSpec spec;
    spec.strategy = SplitStrategy::loso;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        (dataset[i].subject_id == held_subject ? spec.test : spec.train).push_back(i);
    }
    return spec;
}

std::vector<SplitSpec> split_random_kfold(const Dataset& dataset, int k, std::uint64_t seed) {
    if (k < 2) throw SplitError("k-fold split needs k >= 2, got " + std::to_string(k));
    const std::size_t n = dataset.size();
    if (n < static_cast<std::size_t>(k)) {
        throw SplitError("k-fold split needs at least k samples");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<SplitSpec> folds;
    const std::size_t base = n / k, extra = n % k;
    std::size_t start = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
        SplitSpec spec;
        spec.strategy = SplitStrategy::random_kfold;
        spec.seed = seed;
        spec.test.assign(order.begin() + start, order.begin() + start + len);
        spec.train.insert(spec.train.end(), order.begin(), order.begin() + start);
        spec.train.insert(spec.train.end(), order.begin() + start + len, order.end());
        std::sort(spec.test.begin(), spec.test.end());
        std::sort(spec.train.begin(), spec.train.end());
        folds.push_back(std::move(spec));
        start += len;
    }
    return folds;
}

void check_split(const Dataset& dataset, const SplitSpec& split, bool subject_disjoint) {
    std::vector<int> owner(dataset.size(), -1);
    const std::array<const std::vector<std::size_t>*, 3> parts = {&split.train, &split.val, &split.test};
    std::map<std::string, int> subject_owner;
    for (int p = 0; p < 3; ++p) {
        for (std::size_t i : *parts[p]) {
            if (i >= dataset.size()) throw SplitError("split index out of range");
            if (owner[i] != -1) throw SplitError("sample " + std::to_string(i) + " appears in two partitions");
            owner[i] = p;
            if (subject_disjoint) {
                auto [it, inserted] = subject_owner.emplace(dataset[i].subject_id, p);
                if (!inserted && it->second != p) {
                    throw SplitError("subject '" + dataset[i].subject_id + "' spans two partitions");
                }
            }
        }
    }
}

}  // namespace massnet
