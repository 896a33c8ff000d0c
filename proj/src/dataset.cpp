#include "distdiff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "distdiff/errors.hpp"

namespace distdiff {

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::original: return "original";
        case Provenance::synthetic: return "synthetic";
        case Provenance::merged: return "merged";
    }
    return "?";
}

static Provenance provenance_from_name(const std::string& s) {
    if (s == "original") return Provenance::original;
    if (s == "synthetic") return Provenance::synthetic;
    if (s == "merged") return Provenance::merged;
    throw DataError("unknown provenance '" + s + "'");
}

int Dataset::num_classes() const {
    int m = -1;
    for (const Sample& s : samples) m = std::max(m, s.y);
    return m + 1;
}

Tensor Dataset::features() const {
    Tensor out = Tensor::zeros({samples.size(), d});
    for (std::size_t i = 0; i < samples.size(); ++i)
        std::copy(samples[i].x.begin(), samples[i].x.end(), out.data.begin() + i * d);
    return out;
}

Tensor Dataset::features_of_class(int c) const {
    auto idx = class_indices(c);
    Tensor out = Tensor::zeros({idx.size(), d});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(samples[idx[i]].x.begin(), samples[idx[i]].x.end(), out.data.begin() + i * d);
    return out;
}

std::vector<int> Dataset::labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const Sample& s : samples) out.push_back(s.y);
    return out;
}

std::vector<std::size_t> Dataset::class_indices(int c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].y == c) out.push_back(i);
    return out;
}

std::string meta_path_for(const std::string& csv_path) {
    if (csv_path.size() >= 4 && csv_path.substr(csv_path.size() - 4) == ".csv")
        return csv_path.substr(0, csv_path.size() - 4) + ".meta.json";
    return csv_path + ".meta.json";
}

void write_dataset(const Dataset& data, const std::string& csv_path, const nlohmann::json& extra_meta) {
    std::ofstream out(csv_path);
    if (!out) throw DataError("cannot open '" + csv_path + "' for writing");
    out << "label";
    for (std::size_t j = 0; j < data.d; ++j) out << ",x" << j;
    out << "\n";
    char buf[64];
    for (const Sample& s : data.samples) {
        if (s.x.size() != data.d) throw ContractError("dataset: sample dimension mismatch");
        out << s.y;
        for (double v : s.x) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << ',' << buf;
        }
        out << "\n";
    }
    if (!out) throw DataError("write failed for '" + csv_path + "'");
    out.close();

    nlohmann::json meta = extra_meta;
    meta["d"] = data.d;
    auto classes = nlohmann::json::array();
    int nc = data.num_classes();
    for (int c = 0; c < nc; ++c) {
        if (static_cast<std::size_t>(c) < data.class_names.size())
            classes.push_back(data.class_names[c]);
        else
            classes.push_back(std::to_string(c));
    }
    meta["classes"] = classes;
    meta["provenance"] = provenance_name(data.provenance);
    if (data.provenance != Provenance::original) {
        auto seed_map = nlohmann::json::array();
        for (const Sample& s : data.samples) seed_map.push_back(s.source);
        meta["seed_map"] = std::move(seed_map);
    }
    std::ofstream meta_out(meta_path_for(csv_path));
    if (!meta_out) throw DataError("cannot open '" + meta_path_for(csv_path) + "' for writing");
    meta_out << meta.dump(2) << "\n";
}

Dataset read_dataset(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open '" + csv_path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError(csv_path + ": empty file");
    if (line.rfind("label", 0) != 0)
        throw DataError(csv_path + ":1: missing label column in header");
    std::size_t d = std::count(line.begin(), line.end(), ',');

    Dataset data;
    data.d = d;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Sample s;
        const char* p = line.c_str();
        char* end = nullptr;
        long y = std::strtol(p, &end, 10);
        if (end == p) throw DataError(csv_path + ":" + std::to_string(line_no) + ": malformed label");
        s.y = static_cast<int>(y);
        s.x.reserve(d);
        for (std::size_t j = 0; j < d; ++j) {
            if (*end != ',')
                throw DataError(csv_path + ":" + std::to_string(line_no) + ": expected " +
                                std::to_string(d) + " values");
            p = end + 1;
            double v = std::strtod(p, &end);
            if (end == p)
                throw DataError(csv_path + ":" + std::to_string(line_no) + ": malformed value");
            if (!std::isfinite(v))
                throw DataError(csv_path + ":" + std::to_string(line_no) + ": non-finite value");
            s.x.push_back(v);
        }
        if (*end != '\0' && *end != '\r')
            throw DataError(csv_path + ":" + std::to_string(line_no) + ": trailing characters");
        data.samples.push_back(std::move(s));
    }

    // Companion metadata is optional on read; use it when present.
    std::ifstream meta_in(meta_path_for(csv_path));
    if (meta_in) {
        try {
            nlohmann::json meta = nlohmann::json::parse(meta_in);
            if (meta.contains("provenance"))
                data.provenance = provenance_from_name(meta["provenance"].get<std::string>());
            if (meta.contains("classes"))
                data.class_names = meta["classes"].get<std::vector<std::string>>();
            if (meta.contains("seed_map")) {
                auto seed_map = meta["seed_map"].get<std::vector<long long>>();
                if (seed_map.size() == data.samples.size())
                    for (std::size_t i = 0; i < seed_map.size(); ++i)
                        data.samples[i].source = seed_map[i];
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError(meta_path_for(csv_path) + ": " + e.what());
        }
    }
    return data;
}

namespace {

// Deterministic cluster layout: class centers spread on a circle in the
// first two coordinates, cluster offsets drawn from the layout stream.
std::vector<double> class_center(int c, int classes, std::size_t dim, double radius) {
    std::vector<double> center(dim, 0.0);
    double angle = 6.283185307179586 * c / std::max(1, classes);
    center[0] = radius * std::cos(angle);
    if (dim > 1) center[1] = radius * std::sin(angle);
    return center;
}

std::vector<std::vector<double>> cluster_centers(const std::vector<double>& base, int clusters,
                                                 double radius, std::size_t dim, Rng& rng) {
    std::vector<std::vector<double>> out;
    for (int g = 0; g < clusters; ++g) {
        std::vector<double> c = base;
        if (clusters > 1) {
            std::vector<double> dir(dim);
            double norm = 0.0;
            for (double& v : dir) {
                v = rng.normal();
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (std::size_t j = 0; j < dim; ++j) c[j] += radius * dir[j] / (norm > 0 ? norm : 1.0);
        }
        out.push_back(std::move(c));
    }
    return out;
}

Sample draw(const std::vector<double>& center, double sd, int y, Rng& rng) {
    Sample s;
    s.y = y;
    s.x.resize(center.size());
    for (std::size_t j = 0; j < center.size(); ++j) s.x[j] = center[j] + sd * rng.normal();
    return s;
}

}  // namespace

Dataset make_blobs(const BlobsSpec& spec, std::uint64_t seed) {
    if (spec.classes < 1 || spec.per_class < 1 || spec.clusters_per_class < 1)
        throw ConfigError("make_blobs: counts must be positive");
    Rng layout(derive_seed(seed, {0x6c61796f75740000ULL}));
    Rng draw_rng(derive_seed(seed, {0x6472617700ULL}));
    Dataset data;
    data.d = spec.dim;
    for (int c = 0; c < spec.classes; ++c) {
        auto base = class_center(c, spec.classes, spec.dim, spec.class_radius);
        auto centers = cluster_centers(base, spec.clusters_per_class, spec.cluster_radius, spec.dim, layout);
        for (int i = 0; i < spec.per_class; ++i) {
            const auto& center = centers[i % centers.size()];
            data.samples.push_back(draw(center, spec.noise_sd, c, draw_rng));
        }
    }
    return data;
}

ShiftScenario make_shift(const ShiftSpec& spec, std::uint64_t seed) {
    if (spec.target_clusters > spec.broad_clusters)
        throw ConfigError("make_shift: target_clusters must not exceed broad_clusters");
    Rng layout(derive_seed(seed, {0x73686966746c6179ULL}));
    Rng broad_rng(derive_seed(seed, {0x73686966746272ULL}));
    Rng target_rng(derive_seed(seed, {0x7368696674746781ULL}));
    Rng test_rng(derive_seed(seed, {0x73686966747465ULL}));

    ShiftScenario out;
    out.broad.d = out.target.d = out.test.d = spec.dim;
    for (int c = 0; c < spec.classes; ++c) {
        auto base = class_center(c, spec.classes, spec.dim, spec.class_radius);
        auto centers = cluster_centers(base, spec.broad_clusters, spec.cluster_radius, spec.dim, layout);
        for (int i = 0; i < spec.broad_per_class; ++i)
            out.broad.samples.push_back(draw(centers[i % centers.size()], spec.noise_sd, c, broad_rng));
        for (int i = 0; i < spec.target_per_class; ++i)
            out.target.samples.push_back(
                draw(centers[i % spec.target_clusters], spec.noise_sd, c, target_rng));
        for (int i = 0; i < spec.test_per_class; ++i)
            out.test.samples.push_back(
                draw(centers[i % spec.target_clusters], spec.noise_sd, c, test_rng));
    }
    return out;
}

Dataset merge_datasets(const Dataset& original, const Dataset& synthetic) {
    if (original.d != synthetic.d) throw DataError("merge: dimension mismatch");
    Dataset out;
    out.d = original.d;
    out.provenance = Provenance::merged;
    out.class_names = original.class_names;
    out.samples = original.samples;
    out.samples.insert(out.samples.end(), synthetic.samples.begin(), synthetic.samples.end());
    return out;
}

}  // namespace distdiff
