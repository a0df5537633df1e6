#include "aada/io.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "aada/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace aada::io {

namespace {

std::string npy_header(const std::string& descr, const std::vector<int>& shape) {
    std::ostringstream dict;
    dict << "{'descr': '" << descr << "', 'fortran_order': False, 'shape': (";
    for (size_t i = 0; i < shape.size(); ++i) {
        dict << shape[i];
        if (shape.size() == 1 || i + 1 < shape.size()) dict << ",";
        if (i + 1 < shape.size()) dict << " ";
    }
    dict << "), }";
    std::string d = dict.str();
    const size_t base = 10 + d.size() + 1;  // magic+version+len + dict + newline
    const size_t pad = (64 - base % 64) % 64;
    d.append(pad, ' ');
    d.push_back('\n');

    std::string header = "\x93NUMPY";
    header.push_back('\x01');
    header.push_back('\x00');
    const auto len = static_cast<uint16_t>(d.size());
    header.push_back(static_cast<char>(len & 0xff));
    header.push_back(static_cast<char>(len >> 8));
    header += d;
    return header;
}

struct NpyInfo {
    std::string descr;
    std::vector<int> shape;
    size_t data_offset;
};

NpyInfo parse_npy_header(std::ifstream& in, const std::string& path) {
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0)
        throw DataError("npy: bad magic in " + path);
    char version[2];
    in.read(version, 2);
    uint16_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 2);
    std::string dict(len, '\0');
    in.read(dict.data(), len);
    if (!in) throw DataError("npy: truncated header in " + path);

    NpyInfo info;
    info.data_offset = 10 + len;
    const auto dpos = dict.find("'descr':");
    const auto q0 = dict.find('\'', dpos + 8);
    const auto q1 = dict.find('\'', q0 + 1);
    info.descr = dict.substr(q0 + 1, q1 - q0 - 1);
    if (dict.find("'fortran_order': False") == std::string::npos)
        throw DataError("npy: fortran order not supported: " + path);
    const auto p0 = dict.find('(');
    const auto p1 = dict.find(')', p0);
    std::string dims = dict.substr(p0 + 1, p1 - p0 - 1);
    std::stringstream ss(dims);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok.erase(std::remove_if(tok.begin(), tok.end(), ::isspace), tok.end());
        if (!tok.empty()) info.shape.push_back(std::stoi(tok));
    }
    return info;
}

}  // namespace

void write_npy(const std::string& path, const std::vector<int>& shape, const double* data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("npy: cannot write " + path);
    const std::string header = npy_header("<f8", shape);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(Tensor::count(shape) * sizeof(double)));
    if (!out) throw DataError("npy: write failed for " + path);
}

Tensor read_npy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("npy: cannot read " + path);
    const NpyInfo info = parse_npy_header(in, path);
    Tensor t(info.shape);
    if (info.descr == "<f8") {
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    } else if (info.descr == "<f4") {
        std::vector<float> tmp(static_cast<size_t>(t.size()));
        in.read(reinterpret_cast<char*>(tmp.data()),
                static_cast<std::streamsize>(tmp.size() * sizeof(float)));
        for (int64_t i = 0; i < t.size(); ++i) t[i] = tmp[static_cast<size_t>(i)];
    } else {
        throw DataError("npy: unsupported dtype " + info.descr + " in " + path);
    }
    if (!in) throw DataError("npy: truncated data in " + path);
    return t;
}

void write_npy_labels(const std::string& path, const LabelMap& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("npy: cannot write " + path);
    const std::string header = npy_header("|u1", {labels.h, labels.w});
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::vector<uint8_t> bytes(labels.v.size());
    for (size_t i = 0; i < labels.v.size(); ++i) {
        if (labels.v[i] < 0 || labels.v[i] > 255)
            throw DataError("npy: label outside uint8 range");
        bytes[i] = static_cast<uint8_t>(labels.v[i]);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("npy: write failed for " + path);
}

LabelMap read_npy_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("npy: cannot read " + path);
    const NpyInfo info = parse_npy_header(in, path);
    if (info.shape.size() != 2) throw DataError("npy: label map must be 2-D: " + path);
    LabelMap m(info.shape[0], info.shape[1]);
    if (info.descr == "|u1") {
        std::vector<uint8_t> bytes(m.v.size());
        in.read(reinterpret_cast<char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        for (size_t i = 0; i < bytes.size(); ++i) m.v[i] = bytes[i];
    } else if (info.descr == "<i4") {
        std::vector<int32_t> vals(m.v.size());
        in.read(reinterpret_cast<char*>(vals.data()),
                static_cast<std::streamsize>(vals.size() * 4));
        for (size_t i = 0; i < vals.size(); ++i) m.v[i] = vals[i];
    } else {
        throw DataError("npy: unsupported label dtype " + info.descr + " in " + path);
    }
    if (!in) throw DataError("npy: truncated data in " + path);
    return m;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp);
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    }
    fs::rename(tmp, path);
}

void save_dataset(const std::string& dir, const DomainDataset& dataset,
                  const std::vector<std::string>& channel_names) {
    fs::create_directories(dir);
    const int n = dataset.channels();

    json meta;
    meta["gsd"] = dataset.gsd();
    meta["class_count"] = dataset.class_count;
    meta["height_channel"] = dataset.height_channel;
    meta["labels_eval_only"] = dataset.labels_eval_only;
    if (channel_names.empty()) {
        std::vector<std::string> names;
        for (int c = 0; c < n; ++c)
            names.push_back(c == dataset.height_channel ? "height" : "band" + std::to_string(c));
        meta["channel_names"] = names;
    } else {
        meta["channel_names"] = channel_names;
    }
    write_file_atomic(dir + "/meta.json", meta.dump(2) + "\n");

    for (size_t t = 0; t < dataset.samples.size(); ++t) {
        const auto& s = dataset.samples[t];
        const int h = s.height(), w = s.width();
        // stored layout is H x W x N
        std::vector<double> hwn(static_cast<size_t>(h) * w * n);
        for (int c = 0; c < n; ++c)
            for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i)
                hwn[static_cast<size_t>(i) * n + c] =
                    s.channels[static_cast<int64_t>(c) * h * w + i];
        char name[32];
        std::snprintf(name, sizeof(name), "tile%03zu", t);
        write_npy(dir + "/" + name + ".img.npy", {h, w, n}, hwn.data());
        if (!s.labels.empty()) write_npy_labels(dir + "/" + name + ".lbl.npy", s.labels);
    }
}

DomainDataset load_dataset(const std::string& dir) {
    const std::string meta_path = dir + "/meta.json";
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw DataError("dataset: missing " + meta_path);
    json meta;
    try {
        meta_in >> meta;
    } catch (const json::exception& e) {
        throw DataError("dataset: bad meta.json: " + std::string(e.what()));
    }

    DomainDataset ds;
    ds.class_count = meta.at("class_count").get<int>();
    ds.height_channel = meta.value("height_channel", -1);
    ds.labels_eval_only = meta.value("labels_eval_only", false);
    const double gsd = meta.at("gsd").get<double>();

    std::vector<std::string> tiles;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string fname = entry.path().filename().string();
        const auto pos = fname.find(".img.npy");
        if (pos != std::string::npos) tiles.push_back(fname.substr(0, pos));
    }
    std::sort(tiles.begin(), tiles.end());
    if (tiles.empty()) throw DataError("dataset: no tiles in " + dir);

    for (const auto& tile : tiles) {
        Tensor hwn = read_npy(dir + "/" + tile + ".img.npy");
        if (hwn.ndim() != 3) throw DataError("dataset: raster must be HxWxN: " + tile);
        const int h = hwn.dim(0), w = hwn.dim(1), n = hwn.dim(2);
        RasterSample s;
        s.gsd = gsd;
        s.domain_id = fs::path(dir).filename().string();
        s.channels = Tensor({n, h, w});
        for (int c = 0; c < n; ++c)
            for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i)
                s.channels[static_cast<int64_t>(c) * h * w + i] =
                    hwn[i * n + c];
        const std::string lbl = dir + "/" + tile + ".lbl.npy";
        if (fs::exists(lbl)) s.labels = read_npy_labels(lbl);
        ds.samples.push_back(std::move(s));
    }
    ds.validate();
    return ds;
}

}  // namespace aada::io
