#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rkfac/errors.hpp"
#include "rkfac/matrix.hpp"
#include "rkfac/network.hpp"
#include "rkfac/rng.hpp"

namespace rkfac {

/// Synthetic Gaussian-mixture classification data: one spherical cluster
/// per class, means at `separation` times random unit directions.
struct DatasetSpec {
    std::size_t n_classes = 10;
    std::size_t d_in = 32;
    std::size_t n_samples = 4096;
    std::size_t n_test = 1024;
    double spread = 0.35;      // within-cluster std
    double separation = 4.0;   // mean radius; large => linearly separable
    std::string csv_path;      // optional: load features/labels from CSV instead
};

struct Dataset {
    Batch train;
    Batch test;
};

namespace detail {

inline DenseMatrix class_means(const DatasetSpec& spec, RngState& rng) {
    DenseMatrix means = sample_gaussian(rng, spec.d_in, spec.n_classes);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        double norm = 0.0;
        for (std::size_t i = 0; i < spec.d_in; ++i) norm += means(i, c) * means(i, c);
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < spec.d_in; ++i)
            means(i, c) *= spec.separation / norm;
    }
    return means;
}

inline Batch draw_mixture(const DatasetSpec& spec, const DenseMatrix& means,
                          std::size_t n, RngState& rng) {
    Batch b;
    b.x = DenseMatrix(spec.d_in, n);
    b.y.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t c = j % spec.n_classes;  // balanced classes
        b.y[j] = static_cast<int>(c);
        for (std::size_t i = 0; i < spec.d_in; ++i)
            b.x(i, j) = means(i, c) + spec.spread * rng.next_gaussian();
    }
    return b;
}

}  // namespace detail

/// CSV rows: feature_0,...,feature_{d-1},label. No header.
inline Batch load_csv_dataset(const std::string& path, std::size_t d_in) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_csv_dataset: cannot open " + path);
    std::vector<double> features;
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != d_in + 1)
            throw ConfigError("load_csv_dataset: row width != d_in + 1");
        for (std::size_t i = 0; i < d_in; ++i) features.push_back(row[i]);
        labels.push_back(static_cast<int>(row.back()));
    }
    const std::size_t n = labels.size();
    // rows are samples; transpose into column-major batch layout
    Batch b;
    b.x = DenseMatrix(d_in, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < d_in; ++i) b.x(i, j) = features[j * d_in + i];
    if (!b.x.all_finite()) throw ConfigError("load_csv_dataset: non-finite feature");
    b.y = std::move(labels);
    return b;
}

inline Dataset make_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    if (!spec.csv_path.empty()) {
        Batch all = load_csv_dataset(spec.csv_path, spec.d_in);
        const std::size_t n = all.y.size();
        const std::size_t n_test = std::min(spec.n_test, n / 5);
        Dataset ds;
        ds.train.x = DenseMatrix(spec.d_in, n - n_test);
        ds.test.x = DenseMatrix(spec.d_in, n_test);
        for (std::size_t j = 0; j < n; ++j) {
            Batch& dst = (j < n - n_test) ? ds.train : ds.test;
            const std::size_t jj = (j < n - n_test) ? j : j - (n - n_test);
            for (std::size_t i = 0; i < spec.d_in; ++i) dst.x(i, jj) = all.x(i, j);
            dst.y.push_back(all.y[j]);
        }
        return ds;
    }
    RngState rng = RngState(seed).substream(0xDA7A);
    const DenseMatrix means = detail::class_means(spec, rng);
    Dataset ds;
    ds.train = detail::draw_mixture(spec, means, spec.n_samples, rng);
    ds.test = detail::draw_mixture(spec, means, spec.n_test, rng);
    return ds;
}

/// Deterministic batch: columns [start, start+n) of the dataset, wrapping.
inline Batch slice_batch(const Batch& data, std::size_t start, std::size_t n) {
    Batch b;
    b.x = DenseMatrix(data.x.rows(), n);
    b.y.resize(n);
    const std::size_t total = data.y.size();
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = (start + j) % total;
        for (std::size_t i = 0; i < data.x.rows(); ++i) b.x(i, j) = data.x(i, src);
        b.y[j] = data.y[src];
    }
    return b;
}

}  // namespace rkfac
