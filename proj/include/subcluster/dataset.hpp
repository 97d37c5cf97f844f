#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "subcluster/errors.hpp"
#include "subcluster/matrix.hpp"
#include "subcluster/rng.hpp"

namespace subcluster {

struct Dataset {
    Matrix features;                 // (N, D)
    std::vector<int> parent_labels;  // in [0, C)
    std::vector<int> mode_ids;       // per-class mode index; empty when unknown
    std::vector<std::string> class_names;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    std::size_t num_classes() const { return class_names.size(); }

    void check() const {
        if (parent_labels.size() != size())
            throw DimensionError("Dataset: label count != sample count");
        if (!mode_ids.empty() && mode_ids.size() != size())
            throw DimensionError("Dataset: mode_ids length != sample count");
        for (int l : parent_labels)
            if (l < 0 || static_cast<std::size_t>(l) >= num_classes())
                throw LabelError("Dataset: parent label " + std::to_string(l) +
                                 " out of range");
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct ClassSpec {
    std::string name;
    std::size_t num_modes = 1;
    std::size_t samples_per_mode = 1;
    double center_scale = 1.0;  // scales this class's center radius / spacing demand

    friend bool operator==(const ClassSpec&, const ClassSpec&) = default;
};

// Synthetic multi-modal layout: class centers sit on per-class spheres of
// radius class_separation*sigma*center_scale around the origin; each class
// scatters its latent mode centers on a sphere of radius separation*sigma
// around its class center, pairwise at least separation*sigma apart; points
// are Gaussian with scale sigma around their mode center. Setting
// mode_subspace_dim > 0 confines every mode offset to one shared random
// subspace so different classes express their modes along the same axes.
struct GeneratorSpec {
    std::vector<ClassSpec> classes;
    std::size_t dim = 0;
    double sigma = 1.0;
    double separation = 6.0;
    double class_separation = 10.0;
    std::size_t mode_subspace_dim = 0;  // 0 means full-dimensional offsets
    std::uint64_t seed = 0;

    void check() const {
        if (classes.empty()) throw ParameterError("GeneratorSpec: no classes");
        if (dim == 0) throw ParameterError("GeneratorSpec: dim must be positive");
        if (sigma < 0.0) throw ParameterError("GeneratorSpec: sigma must be non-negative");
        if (separation <= 0.0) throw ParameterError("GeneratorSpec: separation must be positive");
        if (class_separation <= 0.0)
            throw ParameterError("GeneratorSpec: class_separation must be positive");
        if (mode_subspace_dim > dim)
            throw ParameterError("GeneratorSpec: mode_subspace_dim exceeds dim");
        for (const auto& c : classes) {
            if (c.num_modes == 0)
                throw ParameterError("GeneratorSpec: num_modes must be positive");
            if (c.samples_per_mode == 0)
                throw ParameterError("GeneratorSpec: samples_per_mode must be positive");
            if (c.center_scale < 0.0)
                throw ParameterError("GeneratorSpec: center_scale must be non-negative");
        }
    }

    friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

namespace detail {

constexpr std::size_t kPlacementRetries = 1000;

inline std::vector<double> unit_direction(Rng& rng, std::size_t dim) {
    for (std::size_t attempt = 0; attempt < kPlacementRetries; ++attempt) {
        std::vector<double> v = rng.gaussian(dim);
        double ss = 0.0;
        for (double x : v) ss += x * x;
        const double norm = std::sqrt(ss);
        if (norm > 1e-12) {
            for (double& x : v) x /= norm;
            return v;
        }
    }
    throw GeneratorError("unit_direction: degenerate draws exhausted retries");
}

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

// Orthonormal basis of `count` random directions via Gram-Schmidt.
inline std::vector<std::vector<double>> random_basis(Rng& rng, std::size_t dim,
                                                     std::size_t count) {
    std::vector<std::vector<double>> basis;
    std::size_t attempts = 0;
    while (basis.size() < count) {
        if (++attempts > kPlacementRetries)
            throw GeneratorError("random_basis: exhausted retries");
        std::vector<double> v = rng.gaussian(dim);
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim; ++i) dot += v[i] * b[i];
            for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * b[i];
        }
        double ss = 0.0;
        for (double x : v) ss += x * x;
        const double norm = std::sqrt(ss);
        if (norm < 1e-8) continue;
        for (double& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    return basis;
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

inline Dataset generate(const GeneratorSpec& spec) {
    spec.check();
    Rng rng(spec.seed);
    const std::size_t num_classes = spec.classes.size();

    // Class centers with mutual spacing scaled by the smaller center_scale
    // of each pair, so scale-0 classes may legitimately coincide.
    std::vector<std::vector<double>> class_centers;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double radius = spec.class_separation * spec.sigma * spec.classes[c].center_scale;
        bool placed = false;
        for (std::size_t attempt = 0; attempt < detail::kPlacementRetries; ++attempt) {
            std::vector<double> center(spec.dim, 0.0);
            if (radius > 0.0) {
                center = detail::unit_direction(rng, spec.dim);
                for (double& x : center) x *= radius;
            }
            bool ok = true;
            for (std::size_t j = 0; j < class_centers.size(); ++j) {
                const double need = spec.class_separation * spec.sigma *
                                    std::min(spec.classes[c].center_scale,
                                             spec.classes[j].center_scale);
                if (detail::sq_dist(center, class_centers[j]) < need * need - 1e-9) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                class_centers.push_back(std::move(center));
                placed = true;
                break;
            }
        }
        if (!placed)
            throw GeneratorError("generate: could not place center for class " +
                                 std::to_string(c) + " after " +
                                 std::to_string(detail::kPlacementRetries) + " attempts");
    }

    std::vector<std::vector<double>> subspace;
    if (spec.mode_subspace_dim > 0)
        subspace = detail::random_basis(rng, spec.dim, spec.mode_subspace_dim);

    Dataset ds;
    std::size_t total = 0;
    for (const auto& c : spec.classes) total += c.num_modes * c.samples_per_mode;
    ds.features = Matrix(total, spec.dim);
    ds.parent_labels.reserve(total);
    ds.mode_ids.reserve(total);

    std::size_t row = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const auto& cls = spec.classes[c];
        ds.class_names.push_back(cls.name.empty() ? "class_" + std::to_string(c) : cls.name);

        const double radius = spec.separation * spec.sigma;
        std::vector<std::vector<double>> mode_centers;
        for (std::size_t m = 0; m < cls.num_modes; ++m) {
            if (m == 0 && cls.num_modes == 1) {
                mode_centers.push_back(class_centers[c]);
                continue;
            }
            bool placed = false;
            for (std::size_t attempt = 0; attempt < detail::kPlacementRetries; ++attempt) {
                std::vector<double> offset(spec.dim, 0.0);
                if (subspace.empty()) {
                    offset = detail::unit_direction(rng, spec.dim);
                } else {
                    std::vector<double> coeff =
                        detail::unit_direction(rng, subspace.size());
                    for (std::size_t b = 0; b < subspace.size(); ++b)
                        for (std::size_t i = 0; i < spec.dim; ++i)
                            offset[i] += coeff[b] * subspace[b][i];
                }
                std::vector<double> center = class_centers[c];
                for (std::size_t i = 0; i < spec.dim; ++i) center[i] += radius * offset[i];
                bool ok = true;
                for (const auto& other : mode_centers)
                    if (detail::sq_dist(center, other) < radius * radius - 1e-9) {
                        ok = false;
                        break;
                    }
                if (ok) {
                    mode_centers.push_back(std::move(center));
                    placed = true;
                    break;
                }
            }
            if (!placed)
                throw GeneratorError("generate: could not place mode " + std::to_string(m) +
                                     " for class " + std::to_string(c) + " after " +
                                     std::to_string(detail::kPlacementRetries) + " attempts");
        }

        for (std::size_t m = 0; m < cls.num_modes; ++m) {
            for (std::size_t s = 0; s < cls.samples_per_mode; ++s) {
                for (std::size_t i = 0; i < spec.dim; ++i)
                    ds.features(row, i) = mode_centers[m][i] + spec.sigma * rng.next_gaussian();
                ds.parent_labels.push_back(static_cast<int>(c));
                ds.mode_ids.push_back(static_cast<int>(m));
                ++row;
            }
        }
    }
    ds.check();
    return ds;
}

inline void save_features(const Dataset& ds, const std::string& path) {
    ds.check();
    std::ofstream out(path);
    if (!out) throw ParseError("save_features: cannot open " + path + " for writing", 0);
    out << "label";
    for (std::size_t j = 0; j < ds.dim(); ++j) out << ",f" << j;
    const bool with_modes = !ds.mode_ids.empty();
    if (with_modes) out << ",mode";
    out << "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.parent_labels[i];
        for (std::size_t j = 0; j < ds.dim(); ++j)
            out << ',' << detail::format_double(ds.features(i, j));
        if (with_modes) out << ',' << ds.mode_ids[i];
        out << "\n";
    }
    if (!out) throw ParseError("save_features: write failed for " + path, 0);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_double_field(const std::string& field, std::size_t line_no) {
    double v = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw ParseError("non-numeric feature value '" + field + "'", line_no);
    return v;
}

inline int parse_int_field(const std::string& field, const char* what, std::size_t line_no) {
    int v = 0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw ParseError(std::string("invalid ") + what + " '" + field + "'", line_no);
    return v;
}

}  // namespace detail

inline Dataset load_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_features: cannot open " + path, 0);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("load_features: empty file", 1);
    const auto header = detail::split_csv_line(line);
    if (header.empty() || header[0] != "label")
        throw ParseError("load_features: header must start with 'label'", 1);
    bool with_modes = false;
    std::size_t dim = header.size() - 1;
    if (dim > 0 && header.back() == "mode") {
        with_modes = true;
        dim -= 1;
    }
    if (dim == 0) throw ParseError("load_features: no feature columns in header", 1);
    for (std::size_t j = 0; j < dim; ++j)
        if (header[j + 1] != "f" + std::to_string(j))
            throw ParseError("load_features: unexpected header column '" + header[j + 1] + "'",
                             1);

    std::vector<std::vector<double>> rows;
    std::vector<int> labels, modes;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        const std::size_t expected = 1 + dim + (with_modes ? 1 : 0);
        if (fields.size() != expected)
            throw ParseError("expected " + std::to_string(expected) + " columns, found " +
                                 std::to_string(fields.size()),
                             line_no);
        const int label = detail::parse_int_field(fields[0], "label", line_no);
        if (label < 0) throw ParseError("negative label", line_no);
        labels.push_back(label);
        std::vector<double> feats(dim);
        for (std::size_t j = 0; j < dim; ++j)
            feats[j] = detail::parse_double_field(fields[j + 1], line_no);
        rows.push_back(std::move(feats));
        if (with_modes) modes.push_back(detail::parse_int_field(fields.back(), "mode", line_no));
    }
    if (rows.empty()) throw ParseError("load_features: no data rows", line_no);

    Dataset ds;
    ds.features = Matrix::from_rows(rows);
    ds.parent_labels = std::move(labels);
    ds.mode_ids = std::move(modes);
    int max_label = 0;
    for (int l : ds.parent_labels) max_label = std::max(max_label, l);
    for (int c = 0; c <= max_label; ++c) ds.class_names.push_back("class_" + std::to_string(c));
    ds.check();
    return ds;
}

}  // namespace subcluster
