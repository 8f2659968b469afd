#pragma once

#include <string>
#include <vector>

#include "bmcl/error.hpp"
#include "bmcl/image.hpp"
#include "bmcl/nn.hpp"
#include "bmcl/rng.hpp"

namespace bmcl {

// Widths and trunk shape for one paired model. Desk-scale defaults; the
// paper_scale() variant restores the full-size configuration.
struct ModelSpec {
    int tab_in = 0;  // post one-hot width, set from the encoded layout
    int tab_hidden = 256;
    int tab_embed = 256;
    int img_in_c = 1;
    int image_size = 32;
    std::vector<int> img_channels = {16, 32, 64, 128};
    int img_embed = 256;
    int proj_dim = 64;
    bool tab_head_bias = false;

    void validate() const {
        if (tab_in < 1) throw ConfigError("model spec: tab_in not set");
        if (tab_hidden < 1 || tab_embed < 1 || img_embed < 1 || proj_dim < 1) {
            throw ConfigError("model spec: widths must be positive");
        }
        if (img_channels.empty()) throw ConfigError("model spec: empty conv trunk");
        if (image_size < 4) throw ConfigError("model spec: image_size too small");
    }
};

inline ModelSpec paper_scale(ModelSpec spec) {
    spec.tab_hidden = 2048;
    spec.tab_embed = 2048;
    spec.img_embed = 2048;
    spec.proj_dim = 128;
    spec.img_channels = {64, 128, 256, 512};
    spec.image_size = 128;
    return spec;
}

// ---------------------------------------------------------------------------
// Tabular encoder: one hidden layer, rectifier, embedding output.
// ---------------------------------------------------------------------------

template <typename S>
class TabularEncoder {
  public:
    TabularEncoder() = default;
    TabularEncoder(const std::string& name, int in, int hidden, int embed)
        : fc1_(name + ".fc1", in, hidden), fc2_(name + ".fc2", hidden, embed) {}

    void init(Rng& rng) {
        fc1_.init(rng);
        fc2_.init(rng);
    }

    Mat<S> forward(const Mat<S>& x) { return fc2_.forward(act_.forward(fc1_.forward(x))); }
    Mat<S> backward(const Mat<S>& dy) { return fc1_.backward(act_.backward(fc2_.backward(dy))); }

    void visit(const ParamVisitor<S>& f) {
        fc1_.visit(f);
        fc2_.visit(f);
    }

    int in_width() const { return fc1_.in_width(); }
    int embed_width() const { return fc2_.out_width(); }

    // in*h + h + h*e + e, asserted in tests.
    Eigen::Index param_count() const { return fc1_.param_count() + fc2_.param_count(); }

    // Exact input-to-embedding Jacobian at x: W2 * diag(step(W1 x + b1)) * W1.
    // Used by attribution, where the rectifier is piecewise linear.
    Mat<S> jacobian(const Vec<S>& x) {
        Mat<S> xm = x;
        const Mat<S> h = fc1_.forward(xm);
        Mat<S> w1_masked = fc1_.weight();
        for (Eigen::Index i = 0; i < h.rows(); ++i) {
            if (h(i, 0) <= S(0)) w1_masked.row(i).setZero();
        }
        return fc2_.weight() * w1_masked;
    }

  private:
    Linear<S> fc1_, fc2_;
    ReLU<S> act_;
};

// ---------------------------------------------------------------------------
// Image encoder: stride-2 conv stages, rectifiers, global average pool, then
// a linear map to the embedding.
// ---------------------------------------------------------------------------

template <typename S>
class ImageEncoder {
  public:
    ImageEncoder() = default;
    ImageEncoder(const std::string& name, const ModelSpec& spec) {
        int c = spec.img_in_c, h = spec.image_size, w = spec.image_size;
        for (size_t i = 0; i < spec.img_channels.size(); ++i) {
            const int out_c = spec.img_channels[i];
            convs_.emplace_back(name + ".conv" + std::to_string(i), c, h, w, out_c, 3, 2, 1);
            c = out_c;
            h = convs_.back().out_h();
            w = convs_.back().out_w();
        }
        acts_.resize(convs_.size());
        pool_ = GlobalAvgPool<S>(c, h, w);
        fc_ = Linear<S>(name + ".fc", c, spec.img_embed);
    }

    void init(Rng& rng) {
        for (auto& conv : convs_) conv.init(rng);
        fc_.init(rng);
    }

    Mat<S> forward(const Mat<S>& x) {
        Mat<S> y = x;
        for (size_t i = 0; i < convs_.size(); ++i) y = acts_[i].forward(convs_[i].forward(y));
        return fc_.forward(pool_.forward(y));
    }

    Mat<S> backward(const Mat<S>& dy) {
        Mat<S> d = pool_.backward(fc_.backward(dy));
        for (size_t i = convs_.size(); i-- > 0;) d = convs_[i].backward(acts_[i].backward(d));
        return d;
    }

    void visit(const ParamVisitor<S>& f) {
        for (auto& conv : convs_) conv.visit(f);
        fc_.visit(f);
    }

    int embed_width() const { return fc_.out_width(); }

    Eigen::Index param_count() const {
        Eigen::Index total = fc_.param_count();
        for (const auto& conv : convs_) total += conv.param_count();
        return total;
    }

  private:
    std::vector<Conv2d<S>> convs_;
    std::vector<ReLU<S>> acts_;
    GlobalAvgPool<S> pool_;
    Linear<S> fc_;
};

// ---------------------------------------------------------------------------
// Projection heads. Outputs are unit rows by construction.
// ---------------------------------------------------------------------------

// Imaging head: hidden layer as wide as the embedding, then the projection.
template <typename S>
class MlpProjectionHead {
  public:
    MlpProjectionHead() = default;
    MlpProjectionHead(const std::string& name, int embed, int proj)
        : fc1_(name + ".fc1", embed, embed), fc2_(name + ".fc2", embed, proj) {}

    void init(Rng& rng) {
        fc1_.init(rng);
        fc2_.init(rng);
    }

    Mat<S> forward(const Mat<S>& x) {
        return norm_.forward(fc2_.forward(act_.forward(fc1_.forward(x))));
    }
    Mat<S> backward(const Mat<S>& dz) {
        return fc1_.backward(act_.backward(fc2_.backward(norm_.backward(dz))));
    }

    void visit(const ParamVisitor<S>& f) {
        fc1_.visit(f);
        fc2_.visit(f);
    }

    int proj_width() const { return fc2_.out_width(); }

  private:
    Linear<S> fc1_, fc2_;
    ReLU<S> act_;
    L2Normalize<S> norm_;
};

// Tabular head: single affine map. Bias off by default, which makes the
// normalized output invariant to input scaling.
template <typename S>
class AffineProjectionHead {
  public:
    AffineProjectionHead() = default;
    AffineProjectionHead(const std::string& name, int embed, int proj, bool bias)
        : fc_(name + ".fc", embed, proj, bias) {}

    void init(Rng& rng) { fc_.init(rng); }

    Mat<S> forward(const Mat<S>& x) { return norm_.forward(fc_.forward(x)); }
    Mat<S> backward(const Mat<S>& dz) { return fc_.backward(norm_.backward(dz)); }

    void visit(const ParamVisitor<S>& f) { fc_.visit(f); }

    int proj_width() const { return fc_.out_width(); }

  private:
    Linear<S> fc_;
    L2Normalize<S> norm_;
};

// Downstream classification head: a single fully connected layer on top of an
// encoder embedding.
template <typename S>
class Classifier {
  public:
    Classifier() = default;
    Classifier(const std::string& name, int embed, int n_classes) : fc_(name + ".fc", embed, n_classes) {}

    void init(Rng& rng) { fc_.init(rng); }
    Mat<S> forward(const Mat<S>& x) { return fc_.forward(x); }
    Mat<S> backward(const Mat<S>& dy) { return fc_.backward(dy); }
    void visit(const ParamVisitor<S>& f) { fc_.visit(f); }
    int n_classes() const { return fc_.out_width(); }

  private:
    Linear<S> fc_;
};

// ---------------------------------------------------------------------------
// The paired pretraining model. All four components always exist so that a
// checkpoint has one layout regardless of pretraining mode.
// ---------------------------------------------------------------------------

template <typename S>
struct PretrainModel {
    ModelSpec spec;
    TabularEncoder<S> tab;
    ImageEncoder<S> img;
    MlpProjectionHead<S> img_head;
    AffineProjectionHead<S> tab_head;

    explicit PretrainModel(const ModelSpec& s)
        : spec(s),
          tab("tab", s.tab_in, s.tab_hidden, s.tab_embed),
          img("img", s),
          img_head("img_head", s.img_embed, s.proj_dim),
          tab_head("tab_head", s.tab_embed, s.proj_dim, s.tab_head_bias) {
        spec.validate();
    }

    void init(uint64_t seed) {
        Rng r_tab(derive_seed({seed, 0x746162u}));
        Rng r_img(derive_seed({seed, 0x696d67u}));
        Rng r_heads(derive_seed({seed, 0x686473u}));
        tab.init(r_tab);
        img.init(r_img);
        img_head.init(r_heads);
        tab_head.init(r_heads);
    }

    void visit(const ParamVisitor<S>& f) {
        tab.visit(f);
        img.visit(f);
        img_head.visit(f);
        tab_head.visit(f);
    }

    Eigen::Index param_count() {
        Eigen::Index total = 0;
        visit([&](Param<S>& p) { total += p.count(); });
        return total;
    }

    uint64_t digest() {
        return param_digest<S>([&](const ParamVisitor<S>& f) { visit(f); });
    }
};

// Packs images into a (c*h*w) x N activation matrix.
template <typename S>
inline Mat<S> to_batch(const std::vector<Image>& views) {
    if (views.empty()) throw ContractError("empty image batch");
    const auto dim = static_cast<Eigen::Index>(views[0].size());
    Mat<S> x(dim, static_cast<Eigen::Index>(views.size()));
    for (size_t n = 0; n < views.size(); ++n) {
        if (static_cast<Eigen::Index>(views[n].size()) != dim) throw ContractError("ragged image batch");
        for (Eigen::Index i = 0; i < dim; ++i) x(i, static_cast<Eigen::Index>(n)) = static_cast<S>(views[n].v[static_cast<size_t>(i)]);
    }
    return x;
}

}  // namespace bmcl
