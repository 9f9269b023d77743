#include "trimine/dataset.hpp"

#include "trimine/csv.hpp"
#include "trimine/error.hpp"
#include "trimine/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <unordered_map>

namespace trimine {

Sample Dataset::sample(std::size_t i) const {
    return Sample{ids.at(i), embeddings.row(static_cast<Eigen::Index>(i)).transpose(), labels.at(i),
                  boxes.at(i)};
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes(), 0);
    for (int label : labels) {
        ++counts.at(static_cast<std::size_t>(label - 1));
    }
    return counts;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.class_names = class_names;
    out.embeddings.resize(static_cast<Eigen::Index>(indices.size()), embeddings.cols());
    out.ids.reserve(indices.size());
    out.labels.reserve(indices.size());
    out.boxes.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t i = indices[r];
        out.ids.push_back(ids.at(i));
        out.labels.push_back(labels[i]);
        out.boxes.push_back(boxes[i]);
        out.embeddings.row(static_cast<Eigen::Index>(r)) = embeddings.row(static_cast<Eigen::Index>(i));
    }
    return out;
}

void Dataset::validate() const {
    const std::size_t n = ids.size();
    if (labels.size() != n || boxes.size() != n || static_cast<std::size_t>(embeddings.rows()) != n) {
        throw ValidationError("dataset columns have inconsistent lengths");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 1 || static_cast<std::size_t>(labels[i]) > class_names.size()) {
            throw ValidationError("sample '" + ids[i] + "': class label out of range");
        }
        if (!boxes[i].valid()) {
            throw ValidationError("sample '" + ids[i] + "': degenerate box (requires x_max > x_min and y_max > y_min)");
        }
    }
}

namespace {

const std::vector<std::string> kAnnotationHeader = {"id", "class", "x_min", "y_min", "x_max", "y_max"};

void check_embedding_header(const std::vector<std::string>& header, const std::string& path) {
    if (header.size() < 2 || header[0] != "id") {
        throw ParseError("'" + path + "': header must be id,e_0,...,e_{k-1}");
    }
    for (std::size_t j = 1; j < header.size(); ++j) {
        if (header[j] != "e_" + std::to_string(j - 1)) {
            throw ParseError("'" + path + "': unexpected header column '" + header[j] + "', expected e_" +
                             std::to_string(j - 1));
        }
    }
}

} // namespace

Dataset load_dataset(const std::filesystem::path& embeddings_path,
                     const std::filesystem::path& annotations_path) {
    const csv::Table emb = csv::read(embeddings_path);
    check_embedding_header(emb.header, embeddings_path.string());
    const std::size_t k_in = emb.header.size() - 1;

    std::unordered_map<std::string, std::size_t> emb_row;
    for (std::size_t r = 0; r < emb.rows.size(); ++r) {
        const auto& row = emb.rows[r];
        if (row.size() != emb.header.size()) {
            throw ParseError("row " + std::to_string(emb.line_numbers[r]) + " of '" + embeddings_path.string() +
                             "': expected " + std::to_string(emb.header.size()) + " fields, got " +
                             std::to_string(row.size()));
        }
        if (!emb_row.emplace(row[0], r).second) {
            throw JoinError("duplicate id '" + row[0] + "' in embeddings file");
        }
    }

    const csv::Table ann = csv::read(annotations_path);
    if (ann.header != kAnnotationHeader) {
        throw ParseError("'" + annotations_path.string() + "': header must be id,class,x_min,y_min,x_max,y_max");
    }

    Dataset ds;
    const std::size_t n = ann.rows.size();
    ds.ids.reserve(n);
    ds.labels.reserve(n);
    ds.boxes.reserve(n);
    ds.embeddings.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k_in));

    std::unordered_map<std::string, int> class_index;
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t r = 0; r < n; ++r) {
        const auto& row = ann.rows[r];
        const std::size_t line = ann.line_numbers[r];
        if (row.size() != kAnnotationHeader.size()) {
            throw ParseError("row " + std::to_string(line) + " of '" + annotations_path.string() + "': expected 6 fields, got " +
                             std::to_string(row.size()));
        }
        const std::string& id = row[0];
        if (!seen.emplace(id, r).second) {
            throw JoinError("duplicate id '" + id + "' in annotations file");
        }
        const auto found = emb_row.find(id);
        if (found == emb_row.end()) {
            throw JoinError("id '" + id + "' missing from embeddings file");
        }

        auto [cls, inserted] = class_index.emplace(row[1], static_cast<int>(ds.class_names.size()) + 1);
        if (inserted) {
            ds.class_names.push_back(row[1]);
        }

        Box box{csv::parse_double(row[2], "x_min", line), csv::parse_double(row[3], "y_min", line),
                csv::parse_double(row[4], "x_max", line), csv::parse_double(row[5], "y_max", line)};
        if (!box.valid()) {
            throw ValidationError("row " + std::to_string(line) + ": degenerate box for id '" + id +
                                  "' (requires x_max > x_min and y_max > y_min)");
        }

        const auto& erow = emb.rows[found->second];
        const std::size_t eline = emb.line_numbers[found->second];
        for (std::size_t j = 0; j < k_in; ++j) {
            ds.embeddings(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
                csv::parse_double(erow[j + 1], emb.header[j + 1], eline);
        }
        ds.ids.push_back(id);
        ds.labels.push_back(cls->second);
        ds.boxes.push_back(box);
    }

    for (const auto& [id, r] : emb_row) {
        if (!seen.contains(id)) {
            throw JoinError("id '" + id + "' missing from annotations file");
        }
    }
    return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& embeddings_path,
                   const std::filesystem::path& annotations_path) {
    dataset.validate();
    std::ofstream emb(embeddings_path);
    std::ofstream ann(annotations_path);
    if (!emb || !ann) {
        throw Error("cannot open dataset output files for writing");
    }
    emb << "id";
    for (std::size_t j = 0; j < dataset.input_dim(); ++j) {
        emb << ",e_" << j;
    }
    emb << '\n';
    ann << "id,class,x_min,y_min,x_max,y_max\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        emb << csv::escape(dataset.ids[i]);
        for (Eigen::Index j = 0; j < dataset.embeddings.cols(); ++j) {
            emb << ',' << csv::format(dataset.embeddings(row, j));
        }
        emb << '\n';
        const Box& b = dataset.boxes[i];
        ann << csv::escape(dataset.ids[i]) << ','
            << csv::escape(dataset.class_names[static_cast<std::size_t>(dataset.labels[i] - 1)]) << ','
            << csv::format(b.x_min) << ',' << csv::format(b.y_min) << ',' << csv::format(b.x_max) << ','
            << csv::format(b.y_max) << '\n';
    }
}

std::string_view to_string(BoxFeature feature) noexcept {
    switch (feature) {
    case BoxFeature::Width: return "width";
    case BoxFeature::Height: return "height";
    case BoxFeature::Area: return "area";
    case BoxFeature::Squareness: return "squareness";
    }
    return "unknown";
}

BoxFeature parse_box_feature(std::string_view name) {
    for (std::size_t f = 0; f < kBoxFeatureCount; ++f) {
        if (to_string(static_cast<BoxFeature>(f)) == name) {
            return static_cast<BoxFeature>(f);
        }
    }
    throw ConfigError("unknown box feature '" + std::string(name) + "' (width|height|area|squareness)");
}

Eigen::VectorXd min_max_normalize(const Eigen::VectorXd& column) {
    if (column.size() == 0) {
        return column;
    }
    const double lo = column.minCoeff();
    const double hi = column.maxCoeff();
    if (!(hi > lo)) {
        return Eigen::VectorXd::Zero(column.size());
    }
    Eigen::VectorXd out = (column.array() - lo) / (hi - lo);
    // Pin the extremes so rounding never leaves them at 1 - ulp.
    for (Eigen::Index i = 0; i < column.size(); ++i) {
        if (column[i] == lo) out[i] = 0.0;
        if (column[i] == hi) out[i] = 1.0;
    }
    return out;
}

BoxFeatureMatrix box_features_from_raw(Eigen::MatrixXd raw) {
    BoxFeatureMatrix out;
    out.normalized.resize(raw.rows(), raw.cols());
    for (Eigen::Index f = 0; f < raw.cols(); ++f) {
        out.normalized.col(f) = min_max_normalize(raw.col(f));
    }
    out.values = std::move(raw);
    return out;
}

BoxFeatureMatrix derive_box_features(const Dataset& dataset) {
    Eigen::MatrixXd raw(static_cast<Eigen::Index>(dataset.size()), static_cast<Eigen::Index>(kBoxFeatureCount));
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Box& b = dataset.boxes[i];
        const double w = b.width();
        const double h = b.height();
        const auto r = static_cast<Eigen::Index>(i);
        raw(r, 0) = w;
        raw(r, 1) = h;
        raw(r, 2) = w * h;
        raw(r, 3) = std::min(w, h) / std::max(w, h);
    }
    return box_features_from_raw(std::move(raw));
}

BoxFeatureMatrix BoxFeatureMatrix::subset(std::span<const std::size_t> indices) const {
    BoxFeatureMatrix out;
    out.values.resize(static_cast<Eigen::Index>(indices.size()), values.cols());
    out.normalized.resize(static_cast<Eigen::Index>(indices.size()), normalized.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        out.values.row(static_cast<Eigen::Index>(r)) = values.row(static_cast<Eigen::Index>(indices[r]));
        out.normalized.row(static_cast<Eigen::Index>(r)) = normalized.row(static_cast<Eigen::Index>(indices[r]));
    }
    return out;
}

std::vector<int> equal_frequency_bins(std::span<const double> values, std::size_t bins,
                                      std::vector<double>* edges) {
    const std::size_t n = values.size();
    if (bins < 2) {
        throw ConfigError("bin count must be at least 2, got " + std::to_string(bins));
    }
    if (bins > n) {
        throw ConfigError("bin count " + std::to_string(bins) + " exceeds sample count " + std::to_string(n));
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> cut(bins - 1);
    for (std::size_t b = 1; b < bins; ++b) {
        const std::size_t pos = (b * n + bins - 1) / bins - 1;
        cut[b - 1] = sorted[pos];
    }
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        // First edge >= value; ties land in the lower bin.
        const auto it = std::lower_bound(cut.begin(), cut.end(), values[i]);
        labels[i] = static_cast<int>(it - cut.begin()) + 1;
    }
    if (edges != nullptr) {
        *edges = std::move(cut);
    }
    return labels;
}

DiscreteBoxLabels discretize_box_labels(const BoxFeatureMatrix& features, BoxFeature source_feature,
                                        std::size_t bins) {
    const Eigen::VectorXd column = features.values.col(static_cast<Eigen::Index>(source_feature));
    DiscreteBoxLabels out;
    out.bins = bins;
    out.source_feature = source_feature;
    out.labels = equal_frequency_bins(std::span<const double>(column.data(), static_cast<std::size_t>(column.size())),
                                      bins, &out.bin_edges);
    return out;
}

Dataset generate_synthetic(std::span<const std::size_t> n_per_class, std::size_t k_in,
                           double geometry_class_coupling, std::uint64_t seed, const SyntheticOptions& options) {
    if (n_per_class.empty()) {
        throw ConfigError("synthetic dataset needs at least one class");
    }
    for (std::size_t count : n_per_class) {
        if (count < 2) {
            throw ConfigError("synthetic class counts must be >= 2");
        }
    }
    if (k_in < 2) {
        throw ConfigError("synthetic embedding dimension must be >= 2");
    }
    if (!(geometry_class_coupling >= 0.0 && geometry_class_coupling <= 1.0)) {
        throw ConfigError("geometry-class coupling must lie in [0, 1]");
    }
    const std::size_t modes = std::max<std::size_t>(1, options.modes_per_class);
    const std::size_t num_classes = n_per_class.size();
    const auto k = static_cast<Eigen::Index>(k_in);

    Rng rng(seed, Stream::Synthetic);

    // Latent layout: [class plane (2), log-scale, |log-aspect|, nuisance...], mapped into
    // the embedding space by a random matrix with unit-norm columns.
    const Eigen::Index latent = std::min<Eigen::Index>(k, 8);
    Eigen::MatrixXd mixing(k, latent);
    for (Eigen::Index j = 0; j < latent; ++j) {
        for (Eigen::Index i = 0; i < k; ++i) {
            mixing(i, j) = rng.normal();
        }
        mixing.col(j).normalize();
    }

    // Mode centres on a circle, classes interleaved so each class surrounds the origin.
    const std::size_t total_modes = num_classes * modes;
    std::vector<std::pair<double, double>> centres(total_modes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t m = 0; m < modes; ++m) {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(m * num_classes + c) /
                                 static_cast<double>(total_modes);
            centres[c * modes + m] = {options.class_separation * std::cos(angle),
                                      options.class_separation * std::sin(angle)};
        }
    }

    constexpr double kBaseLogScale = 3.4657359027997265; // log(32)
    constexpr double kScaleSpread = 0.45;
    constexpr double kAspectSpread = 0.35;
    const double class_noise = std::sqrt(1.0 - geometry_class_coupling * geometry_class_coupling);

    Dataset ds;
    const std::size_t n = std::accumulate(n_per_class.begin(), n_per_class.end(), std::size_t{0});
    ds.embeddings.resize(static_cast<Eigen::Index>(n), k);
    for (std::size_t c = 0; c < num_classes; ++c) {
        ds.class_names.push_back("class_" + std::to_string(c + 1));
    }

    Eigen::VectorXd z(latent);
    std::size_t row = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        // Class position in [-1, 1].
        const double class_pos =
            num_classes > 1 ? 2.0 * static_cast<double>(c) / static_cast<double>(num_classes - 1) - 1.0 : 0.0;
        for (std::size_t s = 0; s < n_per_class[c]; ++s, ++row) {
            // Unit-variance size factor whose class-dependent share grows with the coupling.
            const double z_scale = geometry_class_coupling * class_pos + class_noise * rng.normal();
            const double z_aspect = rng.normal();
            const double log_scale = kBaseLogScale + kScaleSpread * z_scale;
            const double log_aspect = kAspectSpread * z_aspect;
            const double w = std::exp(log_scale + 0.5 * log_aspect);
            const double h = std::exp(log_scale - 0.5 * log_aspect);
            const double x0 = rng.uniform(0.0, 512.0);
            const double y0 = rng.uniform(0.0, 512.0);

            const auto& centre = centres[c * modes + (modes > 1 ? rng.index(modes) : 0)];
            z.setZero();
            z[0] = centre.first + rng.normal();
            z[1] = centre.second + rng.normal();
            if (latent > 2) z[2] = options.geometry_signal * z_scale;
            if (latent > 3) z[3] = options.geometry_signal * std::abs(z_aspect);
            for (Eigen::Index j = 4; j < latent; ++j) {
                z[j] = rng.normal();
            }
            const auto r = static_cast<Eigen::Index>(row);
            ds.embeddings.row(r) = (options.latent_scale * (mixing * z)).transpose();
            for (Eigen::Index j = 0; j < k; ++j) {
                ds.embeddings(r, j) += rng.normal(0.0, options.embedding_noise);
            }

            ds.ids.push_back("s" + std::to_string(row));
            ds.labels.push_back(static_cast<int>(c) + 1);
            ds.boxes.push_back(Box{x0, y0, x0 + w, y0 + h});
        }
    }
    return ds;
}

} // namespace trimine
