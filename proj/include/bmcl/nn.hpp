#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bmcl/error.hpp"
#include "bmcl/hash.hpp"
#include "bmcl/rng.hpp"

namespace bmcl {

// Activations are stored features x batch: column n is sample n. Loss-facing
// code transposes into rows-are-samples form at the projection boundary.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
struct Param {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
    Mat<S> m, v;  // first/second moment state, lazily sized by the optimizer

    void setup(const std::string& n, Eigen::Index rows, Eigen::Index cols) {
        name = n;
        value.setZero(rows, cols);
        grad.setZero(rows, cols);
    }
    void zero_grad() { grad.setZero(); }
    Eigen::Index count() const { return value.size(); }
};

template <typename S>
using ParamVisitor = std::function<void(Param<S>&)>;

// Uniform fan-in init, biases zero. Zero biases keep early activations near
// the origin, which also keeps attribution paths well behaved.
template <typename S>
inline void init_fan_in(Param<S>& weight, Eigen::Index fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index j = 0; j < weight.value.cols(); ++j)
        for (Eigen::Index i = 0; i < weight.value.rows(); ++i)
            weight.value(i, j) = static_cast<S>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename S>
class Linear {
  public:
    Linear() = default;
    Linear(const std::string& name, int in, int out, bool bias = true) : in_(in), out_(out), bias_(bias) {
        W_.setup(name + ".W", out, in);
        if (bias_) b_.setup(name + ".b", out, 1);
    }

    void init(Rng& rng) { init_fan_in(W_, in_, rng); }

    Mat<S> forward(const Mat<S>& x) {
        if (x.rows() != in_) throw ContractError(W_.name + ": input width " + std::to_string(x.rows()) +
                                                 " != " + std::to_string(in_));
        x_ = x;
        Mat<S> y = W_.value * x;
        if (bias_) y.colwise() += b_.value.col(0);
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) {
        W_.grad.noalias() += dy * x_.transpose();
        if (bias_) b_.grad.col(0).noalias() += dy.rowwise().sum();
        return W_.value.transpose() * dy;
    }

    void visit(const ParamVisitor<S>& f) {
        f(W_);
        if (bias_) f(b_);
    }

    int in_width() const { return in_; }
    int out_width() const { return out_; }
    bool has_bias() const { return bias_; }
    const Mat<S>& weight() const { return W_.value; }
    Eigen::Index param_count() const { return W_.count() + (bias_ ? b_.count() : 0); }

  private:
    int in_ = 0, out_ = 0;
    bool bias_ = true;
    Param<S> W_, b_;
    Mat<S> x_;
};

template <typename S>
class ReLU {
  public:
    Mat<S> forward(const Mat<S>& x) {
        y_ = x.cwiseMax(S(0));
        return y_;
    }
    Mat<S> backward(const Mat<S>& dy) {
        return (y_.array() > S(0)).template cast<S>().matrix().cwiseProduct(dy);
    }

  private:
    Mat<S> y_;
};

// 3x3-style convolution via im2col and one batched GEMM. The spatial shape is
// fixed at construction; activations stay packed (c*h*w) x N.
template <typename S>
class Conv2d {
  public:
    Conv2d() = default;
    Conv2d(const std::string& name, int in_c, int in_h, int in_w, int out_c, int kernel, int stride, int pad)
        : in_c_(in_c), in_h_(in_h), in_w_(in_w), out_c_(out_c), k_(kernel), stride_(stride), pad_(pad) {
        out_h_ = (in_h + 2 * pad - kernel) / stride + 1;
        out_w_ = (in_w + 2 * pad - kernel) / stride + 1;
        if (out_h_ < 1 || out_w_ < 1) throw ConfigError(name + ": kernel does not fit input");
        W_.setup(name + ".W", out_c, in_c * kernel * kernel);
        b_.setup(name + ".b", out_c, 1);
    }

    void init(Rng& rng) { init_fan_in(W_, in_c_ * k_ * k_, rng); }

    Mat<S> forward(const Mat<S>& x) {
        const Eigen::Index N = x.cols();
        if (x.rows() != in_c_ * in_h_ * in_w_) throw ContractError(W_.name + ": bad conv input size");
        const int P = out_h_ * out_w_;
        cols_.resize(in_c_ * k_ * k_, static_cast<Eigen::Index>(P) * N);
        for (Eigen::Index n = 0; n < N; ++n) im2col(x.col(n), cols_.middleCols(n * P, P));
        Mat<S> y_flat = W_.value * cols_;  // out_c x (P*N)
        y_flat.colwise() += b_.value.col(0);
        Mat<S> y(static_cast<Eigen::Index>(out_c_) * P, N);
        for (Eigen::Index n = 0; n < N; ++n) {
            for (int oc = 0; oc < out_c_; ++oc) {
                y.col(n).segment(static_cast<Eigen::Index>(oc) * P, P) =
                    y_flat.row(oc).segment(n * P, P).transpose();
            }
        }
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) {
        const int P = out_h_ * out_w_;
        const Eigen::Index N = dy.cols();
        Mat<S> dy_flat(out_c_, static_cast<Eigen::Index>(P) * N);
        for (Eigen::Index n = 0; n < N; ++n) {
            for (int oc = 0; oc < out_c_; ++oc) {
                dy_flat.row(oc).segment(n * P, P) =
                    dy.col(n).segment(static_cast<Eigen::Index>(oc) * P, P).transpose();
            }
        }
        W_.grad.noalias() += dy_flat * cols_.transpose();
        b_.grad.col(0).noalias() += dy_flat.rowwise().sum();
        const Mat<S> dcols = W_.value.transpose() * dy_flat;
        Mat<S> dx = Mat<S>::Zero(static_cast<Eigen::Index>(in_c_) * in_h_ * in_w_, N);
        for (Eigen::Index n = 0; n < N; ++n) col2im(dcols.middleCols(n * P, P), dx.col(n));
        return dx;
    }

    void visit(const ParamVisitor<S>& f) {
        f(W_);
        f(b_);
    }

    int out_c() const { return out_c_; }
    int out_h() const { return out_h_; }
    int out_w() const { return out_w_; }
    Eigen::Index param_count() const { return W_.count() + b_.count(); }

  private:
    template <typename ColRef, typename BlockRef>
    void im2col(const ColRef& x, BlockRef cols) const {
        for (int oy = 0; oy < out_h_; ++oy) {
            for (int ox = 0; ox < out_w_; ++ox) {
                const Eigen::Index col = static_cast<Eigen::Index>(oy) * out_w_ + ox;
                Eigen::Index row = 0;
                for (int ic = 0; ic < in_c_; ++ic) {
                    for (int ky = 0; ky < k_; ++ky) {
                        const int iy = oy * stride_ - pad_ + ky;
                        for (int kx = 0; kx < k_; ++kx, ++row) {
                            const int ix = ox * stride_ - pad_ + kx;
                            const bool in = iy >= 0 && iy < in_h_ && ix >= 0 && ix < in_w_;
                            cols(row, col) =
                                in ? x(static_cast<Eigen::Index>(ic) * in_h_ * in_w_ + iy * in_w_ + ix) : S(0);
                        }
                    }
                }
            }
        }
    }

    template <typename BlockRef, typename ColRef>
    void col2im(const BlockRef& dcols, ColRef dx) const {
        for (int oy = 0; oy < out_h_; ++oy) {
            for (int ox = 0; ox < out_w_; ++ox) {
                const Eigen::Index col = static_cast<Eigen::Index>(oy) * out_w_ + ox;
                Eigen::Index row = 0;
                for (int ic = 0; ic < in_c_; ++ic) {
                    for (int ky = 0; ky < k_; ++ky) {
                        const int iy = oy * stride_ - pad_ + ky;
                        for (int kx = 0; kx < k_; ++kx, ++row) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (iy >= 0 && iy < in_h_ && ix >= 0 && ix < in_w_) {
                                dx(static_cast<Eigen::Index>(ic) * in_h_ * in_w_ + iy * in_w_ + ix) +=
                                    dcols(row, col);
                            }
                        }
                    }
                }
            }
        }
    }

    int in_c_ = 0, in_h_ = 0, in_w_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    int out_h_ = 0, out_w_ = 0;
    Param<S> W_, b_;
    Mat<S> cols_;
};

template <typename S>
class GlobalAvgPool {
  public:
    GlobalAvgPool() = default;
    GlobalAvgPool(int c, int h, int w) : c_(c), hw_(h * w) {}

    Mat<S> forward(const Mat<S>& x) {
        if (x.rows() != static_cast<Eigen::Index>(c_) * hw_) throw ContractError("pool input size mismatch");
        Mat<S> y(c_, x.cols());
        for (Eigen::Index n = 0; n < x.cols(); ++n)
            for (int c = 0; c < c_; ++c)
                y(c, n) = x.col(n).segment(static_cast<Eigen::Index>(c) * hw_, hw_).mean();
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) {
        Mat<S> dx(static_cast<Eigen::Index>(c_) * hw_, dy.cols());
        const S inv = S(1) / static_cast<S>(hw_);
        for (Eigen::Index n = 0; n < dy.cols(); ++n)
            for (int c = 0; c < c_; ++c)
                dx.col(n).segment(static_cast<Eigen::Index>(c) * hw_, hw_).setConstant(dy(c, n) * inv);
        return dx;
    }

  private:
    int c_ = 0, hw_ = 0;
};

// Row-wise L2 normalization onto the unit sphere, with backward. Operates on
// columns here (column = sample); a 1e-12 floor guards zero vectors.
template <typename S>
class L2Normalize {
  public:
    Mat<S> forward(const Mat<S>& x) {
        norms_ = x.colwise().norm().cwiseMax(S(1e-12));
        z_ = x;
        for (Eigen::Index n = 0; n < z_.cols(); ++n) z_.col(n) /= norms_(n);
        return z_;
    }

    Mat<S> backward(const Mat<S>& dz) {
        Mat<S> dx(z_.rows(), z_.cols());
        for (Eigen::Index n = 0; n < z_.cols(); ++n) {
            const S dot = z_.col(n).dot(dz.col(n));
            dx.col(n) = (dz.col(n) - z_.col(n) * dot) / norms_(n);
        }
        return dx;
    }

  private:
    Mat<S> z_;
    Eigen::Matrix<S, 1, Eigen::Dynamic> norms_;
};

// ---------------------------------------------------------------------------
// Optimizer: adaptive moments with decoupled weight decay.
// ---------------------------------------------------------------------------

template <typename S>
class AdamW {
  public:
    explicit AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    template <typename VisitFn>
    void step(VisitFn&& visit, double lr, double weight_decay) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        visit([&](Param<S>& p) {
            if (p.m.size() == 0) {
                p.m.setZero(p.value.rows(), p.value.cols());
                p.v.setZero(p.value.rows(), p.value.cols());
            }
            if (weight_decay != 0.0) p.value *= S(1.0 - lr * weight_decay);
            p.m = S(beta1_) * p.m + S(1.0 - beta1_) * p.grad;
            p.v = S(beta2_) * p.v + S(1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
            const auto m_hat = (p.m / S(bc1)).array();
            const auto v_hat = (p.v / S(bc2)).array();
            p.value.array() -= S(lr) * m_hat / (v_hat.sqrt() + S(eps_));
        });
    }

    int64_t steps_taken() const { return t_; }

  private:
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

// FNV digest of parameter bytes in visitation order; detects any drift.
template <typename S, typename VisitFn>
inline uint64_t param_digest(VisitFn&& visit) {
    Fnv1a h;
    visit([&](Param<S>& p) {
        h.update(p.name.data(), p.name.size());
        h.update(p.value.data(), static_cast<size_t>(p.value.size()) * sizeof(S));
    });
    return h.digest();
}

template <typename S, typename VisitFn>
inline void zero_grads(VisitFn&& visit) {
    visit([](Param<S>& p) { p.zero_grad(); });
}

template <typename S, typename VisitFn>
inline Eigen::Index count_params(VisitFn&& visit) {
    Eigen::Index total = 0;
    visit([&](Param<S>& p) { total += p.count(); });
    return total;
}

}  // namespace bmcl
