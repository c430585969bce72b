#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "rkfac/errors.hpp"
#include "rkfac/kfactor.hpp"
#include "rkfac/matrix.hpp"
#include "rkfac/rng.hpp"

namespace rkfac {

/// Inputs as columns, integer class labels.
struct Batch {
    DenseMatrix x;       // d_in x n
    std::vector<int> y;  // length n, values in [0, n_classes)
};

/// One fully-connected layer: weights with bias column, the two EA
/// K-factors and (optionally stale, per the inverse recomputation period)
/// cached decompositions.
struct LayerState {
    DenseMatrix w;        // d_out x (d_in + 1)
    EAKFactor a_factor;   // forward factor, dim d_in + 1
    EAKFactor g_factor;   // backward factor, dim d_out
    std::optional<LowRankEig> cached_a_decomp;
    std::optional<LowRankEig> cached_g_decomp;
    std::size_t layer_index = 0;
};

struct ForwardResult {
    double loss = 0.0;
    std::vector<DenseMatrix> a_matrices;  // per layer, (d_in+1) x n, unscaled
};

struct BackwardResult {
    std::vector<DenseMatrix> gradients;   // per layer, d_out x (d_in+1)
    std::vector<DenseMatrix> g_matrices;  // per layer, d_out x n (per-sample signals)
};

/// Fully-connected ReLU classifier with softmax cross-entropy and
/// hand-derived backpropagation exposing the per-layer factor matrices.
///
/// Scaling convention: forward/backward return the raw activation matrices
/// (with 1-row) and per-sample pre-activation gradients; accumulate_factors
/// divides both by sqrt(n_BS), so A A^T and G G^T are batch-mean second
/// moments and Mat(g) = G A^T holds exactly.
class Mlp {
  public:
    Mlp(std::size_t d_in, const std::vector<std::size_t>& hidden,
        std::size_t n_classes, double rho, RngState& rng)
        : d_in_(d_in), n_classes_(n_classes) {
        std::vector<std::size_t> dims;
        dims.push_back(d_in);
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(n_classes);

        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            LayerState layer;
            layer.layer_index = l;
            layer.w = DenseMatrix(dims[l + 1], dims[l] + 1);
            const double limit = std::sqrt(6.0 / static_cast<double>(dims[l]));
            for (std::size_t i = 0; i < dims[l + 1]; ++i)
                for (std::size_t j = 0; j < dims[l]; ++j)
                    layer.w(i, j) = limit * rng.next_uniform_signed();
            // bias column stays zero
            layer.a_factor = EAKFactor(dims[l] + 1, rho);
            layer.g_factor = EAKFactor(dims[l + 1], rho);
            layers_.push_back(std::move(layer));
        }
    }

    std::size_t n_layers() const { return layers_.size(); }
    std::vector<LayerState>& layers() { return layers_; }
    const std::vector<LayerState>& layers() const { return layers_; }
    std::size_t d_in() const { return d_in_; }
    std::size_t n_classes() const { return n_classes_; }

    ForwardResult forward(const Batch& batch) {
        if (batch.x.rows() != d_in_)
            throw DimensionMismatch("forward: batch input dim != network d_in");
        const std::size_t n = batch.x.cols();
        if (batch.y.size() != n)
            throw DimensionMismatch("forward: label count != batch size");

        ahat_.clear();
        preact_.clear();
        min_abs_preact_ = std::numeric_limits<double>::infinity();

        DenseMatrix act = batch.x;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            DenseMatrix ah = with_ones_row(act);
            DenseMatrix z = matmul(layers_[l].w, ah);
            ahat_.push_back(std::move(ah));
            if (l + 1 < layers_.size()) {
                for (std::size_t i = 0; i < z.size(); ++i)
                    min_abs_preact_ = std::min(min_abs_preact_, std::abs(z.data()[i]));
                act = z;
                for (std::size_t i = 0; i < act.size(); ++i)
                    act.data()[i] = std::max(0.0, act.data()[i]);
            }
            preact_.push_back(std::move(z));
        }

        probs_ = softmax_cols(preact_.back());
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            loss -= std::log(std::max(probs_(static_cast<std::size_t>(batch.y[i]), i),
                                      1e-300));
        loss /= static_cast<double>(n);

        forward_done_ = true;
        return {loss, ahat_};
    }

    BackwardResult backward(const Batch& batch) {
        if (!forward_done_) throw StateError("backward: forward not called");
        const std::size_t n = batch.x.cols();
        const std::size_t nl = layers_.size();

        std::vector<DenseMatrix> grads(nl), gmats(nl);

        // Per-sample softmax cross-entropy signal: p - onehot(y).
        DenseMatrix delta = probs_;
        for (std::size_t i = 0; i < n; ++i)
            delta(static_cast<std::size_t>(batch.y[i]), i) -= 1.0;

        for (std::size_t l = nl; l-- > 0;) {
            grads[l] = scale(matmul_a_bt(delta, ahat_[l]), 1.0 / static_cast<double>(n));
            gmats[l] = delta;
            if (l > 0) {
                // Drop the bias row of W before propagating, then ReLU gate.
                const LayerState& layer = layers_[l];
                DenseMatrix next(layer.w.cols() - 1, n);
                for (std::size_t j = 0; j + 1 < layer.w.cols(); ++j)
                    for (std::size_t i = 0; i < layer.w.rows(); ++i) {
                        const double wij = layer.w(i, j);
                        if (wij == 0.0) continue;
                        for (std::size_t c = 0; c < n; ++c)
                            next(j, c) += wij * delta(i, c);
                    }
                const DenseMatrix& z = preact_[l - 1];
                for (std::size_t i = 0; i < next.size(); ++i)
                    if (z.data()[i] <= 0.0) next.data()[i] = 0.0;
                delta = std::move(next);
            }
        }
        return {std::move(grads), std::move(gmats)};
    }

    void accumulate_factors(const std::vector<DenseMatrix>& a_matrices,
                            const std::vector<DenseMatrix>& g_matrices) {
        if (a_matrices.size() != layers_.size() || g_matrices.size() != layers_.size())
            throw DimensionMismatch("accumulate_factors: per-layer matrix count");
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const double inv_sqrt_n =
                1.0 / std::sqrt(static_cast<double>(a_matrices[l].cols()));
            ea_update(layers_[l].a_factor, scale(a_matrices[l], inv_sqrt_n));
            ea_update(layers_[l].g_factor, scale(g_matrices[l], inv_sqrt_n));
        }
    }

    /// Fraction of argmax predictions matching labels; does not disturb
    /// the training forward cache.
    double accuracy(const Batch& batch) const {
        DenseMatrix act = batch.x;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            DenseMatrix z = matmul(layers_[l].w, with_ones_row(act));
            if (l + 1 < layers_.size())
                for (std::size_t i = 0; i < z.size(); ++i)
                    z.data()[i] = std::max(0.0, z.data()[i]);
            act = std::move(z);
        }
        std::size_t hits = 0;
        for (std::size_t i = 0; i < batch.x.cols(); ++i) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < act.rows(); ++c)
                if (act(c, i) > act(best, i)) best = c;
            if (static_cast<int>(best) == batch.y[i]) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(batch.x.cols());
    }

    /// Smallest |pre-activation| over hidden layers in the last forward
    /// pass; finite-difference tests resample near ReLU kinks.
    double min_abs_preactivation() const { return min_abs_preact_; }

  private:
    static DenseMatrix with_ones_row(const DenseMatrix& a) {
        DenseMatrix out(a.rows() + 1, a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
        for (std::size_t j = 0; j < a.cols(); ++j) out(a.rows(), j) = 1.0;
        return out;
    }

    static DenseMatrix softmax_cols(const DenseMatrix& z) {
        DenseMatrix p = z;
        for (std::size_t j = 0; j < z.cols(); ++j) {
            double zmax = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < z.rows(); ++i) zmax = std::max(zmax, z(i, j));
            double sum = 0.0;
            for (std::size_t i = 0; i < z.rows(); ++i) {
                p(i, j) = std::exp(z(i, j) - zmax);
                sum += p(i, j);
            }
            for (std::size_t i = 0; i < z.rows(); ++i) p(i, j) /= sum;
        }
        return p;
    }

    std::size_t d_in_, n_classes_;
    std::vector<LayerState> layers_;

    // forward cache
    std::vector<DenseMatrix> ahat_;
    std::vector<DenseMatrix> preact_;
    DenseMatrix probs_;
    bool forward_done_ = false;
    double min_abs_preact_ = 0.0;
};

}  // namespace rkfac
