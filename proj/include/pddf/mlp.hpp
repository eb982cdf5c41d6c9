#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "pddf/core.hpp"
#include "pddf/rng.hpp"

namespace pddf {

// Sinusoidal MLP with a mixed-mode derivative engine:
//   - first-order input derivatives by forward tangent propagation,
//   - second directional derivatives by nested tangent propagation,
//   - parameter gradients of any scalar built from values *and* tangent
//     outputs by reverse accumulation over the augmented forward graph.
// The same machinery serves the shape field (6 -> 5) and the small
// closest-direction network (3 -> 3*Kc).

struct MlpShape {
    int input_dim = 0;
    std::vector<int> hidden;
    int output_dim = 0;
    double omega0 = 1.0;

    bool operator==(const MlpShape&) const = default;
};

/// Canonical f32 parameter storage (also the checkpoint payload layout:
/// per layer, weights row-major then bias).
struct MlpWeights {
    struct Layer {
        int rows = 0, cols = 0;        // rows = fan_out, cols = fan_in
        std::vector<float> w;          // row-major rows x cols
        std::vector<float> b;          // rows
    };
    MlpShape shape;
    std::vector<Layer> layers;  // hidden layers then the linear head

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }
};

/// SIREN-scheme initialization: first layer U(-1/fan_in, 1/fan_in), later
/// layers U(+-sqrt(6/fan_in)/omega0); biases U(+-1/sqrt(fan_in)). Draws happen
/// in double and are stored as f32, layer by layer, weights then bias.
inline MlpWeights init_siren_weights(const MlpShape& shape, std::uint64_t seed) {
    if (shape.hidden.empty()) throw std::invalid_argument("hidden_sizes must be non-empty");
    MlpWeights out;
    out.shape = shape;
    Rng rng(seed);
    int fan_in = shape.input_dim;
    std::vector<int> outs(shape.hidden);
    outs.push_back(shape.output_dim);
    for (std::size_t l = 0; l < outs.size(); ++l) {
        MlpWeights::Layer layer;
        layer.rows = outs[l];
        layer.cols = fan_in;
        layer.w.resize(static_cast<std::size_t>(layer.rows) * layer.cols);
        layer.b.resize(layer.rows);
        const double wb = l == 0 ? 1.0 / fan_in
                                 : std::sqrt(6.0 / fan_in) / shape.omega0;
        const double bb = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& w : layer.w) w = static_cast<float>(rng.uniform(-wb, wb));
        for (auto& b : layer.b) b = static_cast<float>(rng.uniform(-bb, bb));
        fan_in = layer.rows;
        out.layers.push_back(std::move(layer));
    }
    return out;
}

template <typename Real>
class SirenMlp {
public:
    using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

    struct Layer {
        Mat w;  // fan_out x fan_in
        Vec b;
    };

    SirenMlp() = default;

    explicit SirenMlp(const MlpWeights& weights) : shape_(weights.shape) {
        layers_.reserve(weights.layers.size());
        for (const auto& src : weights.layers) {
            Layer l;
            l.w.resize(src.rows, src.cols);
            for (int r = 0; r < src.rows; ++r)
                for (int c = 0; c < src.cols; ++c)
                    l.w(r, c) = static_cast<Real>(src.w[static_cast<std::size_t>(r) * src.cols + c]);
            l.b = Vec(src.rows);
            for (int r = 0; r < src.rows; ++r) l.b(r) = static_cast<Real>(src.b[r]);
            layers_.push_back(std::move(l));
        }
    }

    MlpWeights export_weights() const {
        MlpWeights out;
        out.shape = shape_;
        for (const auto& l : layers_) {
            MlpWeights::Layer dst;
            dst.rows = static_cast<int>(l.w.rows());
            dst.cols = static_cast<int>(l.w.cols());
            dst.w.resize(static_cast<std::size_t>(dst.rows) * dst.cols);
            dst.b.resize(dst.rows);
            for (int r = 0; r < dst.rows; ++r)
                for (int c = 0; c < dst.cols; ++c)
                    dst.w[static_cast<std::size_t>(r) * dst.cols + c] = static_cast<float>(l.w(r, c));
            for (int r = 0; r < dst.rows; ++r) dst.b[r] = static_cast<float>(l.b(r));
            out.layers.push_back(std::move(dst));
        }
        return out;
    }

    const MlpShape& shape() const { return shape_; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::size_t hidden_count() const { return layers_.size() - 1; }

    // -- plain batched forward -------------------------------------------

    Mat forward(const Mat& x) const {
        const Real w0 = static_cast<Real>(shape_.omega0);
        Mat a = x;
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            Mat z = (a * layers_[l].w.transpose()).rowwise() + layers_[l].b.transpose();
            a = (z.array() * w0).sin().matrix();
        }
        return (a * layers_.back().w.transpose()).rowwise() + layers_.back().b.transpose();
    }

    // -- augmented forward (values + tangents), cached for reverse --------

    struct Cache {
        Mat y;                             // head output, B x out
        std::vector<Mat> a;                // activations, a[0] = input
        std::vector<Mat> c;                // cos(omega z) per hidden layer
        std::vector<std::vector<Mat>> u;   // u[k][l]: tangent activations
        std::vector<std::vector<Mat>> p;   // p[k][l]: tangent pre-activations
        std::vector<Mat> v;                // v[k]: tangent head outputs
    };

    /// Forward pass carrying `tangents.size()` first-order streams.
    /// Each tangent matrix is B x input_dim (one direction per row).
    void forward_jet(const Mat& x, std::span<const Mat> tangents,
                     Cache& cache) const {
        const Real w0 = static_cast<Real>(shape_.omega0);
        const std::size_t nl = layers_.size() - 1;  // hidden layers
        const std::size_t nk = tangents.size();
        cache.a.assign(nl + 1, Mat());
        cache.c.assign(nl, Mat());
        cache.u.assign(nk, std::vector<Mat>(nl + 1));
        cache.p.assign(nk, std::vector<Mat>(nl));
        cache.v.assign(nk, Mat());
        cache.a[0] = x;
        for (std::size_t k = 0; k < nk; ++k) cache.u[k][0] = tangents[k];
        for (std::size_t l = 0; l < nl; ++l) {
            Mat z = (cache.a[l] * layers_[l].w.transpose()).rowwise() + layers_[l].b.transpose();
            auto phase = (z.array() * w0);
            cache.a[l + 1] = phase.sin().matrix();
            cache.c[l] = phase.cos().matrix();
            for (std::size_t k = 0; k < nk; ++k) {
                cache.p[k][l].noalias() = cache.u[k][l] * layers_[l].w.transpose();
                cache.u[k][l + 1] = (cache.c[l].array() * cache.p[k][l].array() * w0).matrix();
            }
        }
        cache.y.noalias() = cache.a[nl] * layers_.back().w.transpose();
        cache.y.rowwise() += layers_.back().b.transpose();
        for (std::size_t k = 0; k < nk; ++k)
            cache.v[k].noalias() = cache.u[k][nl] * layers_.back().w.transpose();
    }

    // -- reverse accumulation over the augmented graph --------------------

    struct Grads {
        std::vector<Layer> layers;

        void init_like(const SirenMlp& net) {
            layers.resize(net.layers_.size());
            for (std::size_t l = 0; l < layers.size(); ++l) {
                layers[l].w = Mat::Zero(net.layers_[l].w.rows(), net.layers_[l].w.cols());
                layers[l].b = Vec::Zero(net.layers_[l].b.size());
            }
        }
        void add(const Grads& o) {
            for (std::size_t l = 0; l < layers.size(); ++l) {
                layers[l].w += o.layers[l].w;
                layers[l].b += o.layers[l].b;
            }
        }
        bool all_finite() const {
            for (const auto& l : layers)
                if (!l.w.allFinite() || !l.b.allFinite()) return false;
            return true;
        }
    };

    /// Accumulates parameter gradients for a scalar whose partials with
    /// respect to the head outputs (y_bar) and tangent head outputs (v_bar)
    /// are given. v_bar must match the tangent count of the cache.
    void backward(const Cache& cache, const Mat& y_bar,
                  std::span<const Mat> v_bar, Grads& grads) const {
        const Real w0 = static_cast<Real>(shape_.omega0);
        const std::size_t nl = layers_.size() - 1;
        const std::size_t nk = v_bar.size();

        grads.layers.back().w.noalias() += y_bar.transpose() * cache.a[nl];
        grads.layers.back().b += y_bar.colwise().sum().transpose();
        Mat a_bar = y_bar * layers_.back().w;
        std::vector<Mat> u_bar(nk);
        for (std::size_t k = 0; k < nk; ++k) {
            grads.layers.back().w.noalias() += v_bar[k].transpose() * cache.u[k][nl];
            u_bar[k] = v_bar[k] * layers_.back().w;
        }

        for (std::size_t l = nl; l-- > 0;) {
            // a[l+1] = sin(w0 z),  u[k][l+1] = w0 cos(w0 z) .* p[k][l]
            Mat z_bar = (cache.c[l].array() * a_bar.array() * w0).matrix();
            for (std::size_t k = 0; k < nk; ++k)
                z_bar.array() -=
                    w0 * w0 * cache.a[l + 1].array() * cache.p[k][l].array() * u_bar[k].array();
            grads.layers[l].w.noalias() += z_bar.transpose() * cache.a[l];
            grads.layers[l].b += z_bar.colwise().sum().transpose();
            for (std::size_t k = 0; k < nk; ++k) {
                Mat p_bar = (cache.c[l].array() * u_bar[k].array() * w0).matrix();
                grads.layers[l].w.noalias() += p_bar.transpose() * cache.u[k][l];
                u_bar[k] = p_bar * layers_[l].w;
            }
            if (l > 0) a_bar = z_bar * layers_[l].w;
        }
    }

    // -- single-query jet with optional second-order streams --------------

    struct SingleJet {
        Vec y;                         // head values
        std::vector<Vec> dy;           // per first-order tangent
        std::vector<Vec> d2y;          // per requested pair
    };

    /// Propagates first-order tangents and, for each (i, j) index pair into
    /// `tangents`, the second directional derivative stream.
    SingleJet jet_single(const Vec& x, const std::vector<Vec>& tangents,
                         const std::vector<std::pair<int, int>>& pairs) const {
        const Real w0 = static_cast<Real>(shape_.omega0);
        const std::size_t nl = layers_.size() - 1;
        const std::size_t nk = tangents.size();
        const std::size_t np = pairs.size();

        Vec a = x;
        std::vector<Vec> u(nk);
        for (std::size_t k = 0; k < nk; ++k) u[k] = tangents[k];
        std::vector<Vec> m(np);
        for (std::size_t q = 0; q < np; ++q) m[q] = Vec::Zero(x.size());

        for (std::size_t l = 0; l < nl; ++l) {
            const auto& W = layers_[l].w;
            Vec z = W * a + layers_[l].b;
            Vec s = (z.array() * w0).sin();
            Vec c = (z.array() * w0).cos();
            std::vector<Vec> p(nk);
            for (std::size_t k = 0; k < nk; ++k) p[k] = W * u[k];
            for (std::size_t q = 0; q < np; ++q) {
                Vec mq = W * m[q];
                m[q] = (w0 * c.array() * mq.array() -
                        w0 * w0 * s.array() * p[pairs[q].first].array() *
                            p[pairs[q].second].array())
                           .matrix();
            }
            for (std::size_t k = 0; k < nk; ++k)
                u[k] = (w0 * c.array() * p[k].array()).matrix();
            a = s;
        }
        const auto& Wh = layers_.back().w;
        SingleJet out;
        out.y = Wh * a + layers_.back().b;
        out.dy.resize(nk);
        for (std::size_t k = 0; k < nk; ++k) out.dy[k] = Wh * u[k];
        out.d2y.resize(np);
        for (std::size_t q = 0; q < np; ++q) out.d2y[q] = Wh * m[q];
        return out;
    }

private:
    MlpShape shape_;
    std::vector<Layer> layers_;
};

}  // namespace pddf
