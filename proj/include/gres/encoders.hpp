#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "gres/autodiff.hpp"
#include "gres/rng.hpp"

namespace gres {

// Small trainable stand-ins for the text and image backbones. The text
// side is an embedding table with mean pooling and a two-layer perceptron;
// the image side is three 3x3 convolution blocks with total stride 4.

inline const std::string kNoToken = "<no>";
inline const std::string kUnkToken = "<unk>";

// The anti-expression: the expression with the reserved negation prefix.
inline std::vector<std::string> make_anti(const std::vector<std::string>& expression) {
    if (expression.empty()) throw std::invalid_argument("make_anti: empty expression");
    std::vector<std::string> anti;
    anti.reserve(expression.size() + 1);
    anti.push_back(kNoToken);
    anti.insert(anti.end(), expression.begin(), expression.end());
    return anti;
}

struct Vocabulary {
    std::vector<std::string> tokens; // reserved tokens first
    std::unordered_map<std::string, int> index;

    Vocabulary() = default;

    explicit Vocabulary(const std::vector<std::string>& data_tokens) {
        tokens = {kUnkToken, kNoToken};
        for (const std::string& t : data_tokens)
            if (t != kUnkToken && t != kNoToken) tokens.push_back(t);
        for (std::size_t i = 0; i < tokens.size(); ++i) index[tokens[i]] = static_cast<int>(i);
    }

    int size() const { return static_cast<int>(tokens.size()); }

    int lookup(const std::string& t) const {
        auto it = index.find(t);
        return it == index.end() ? 0 : it->second; // 0 = <unk>
    }

    std::vector<int> encode(const std::vector<std::string>& expr) const {
        std::vector<int> ids;
        ids.reserve(expr.size());
        for (const std::string& t : expr) ids.push_back(lookup(t));
        return ids;
    }
};

namespace init {

inline Tensor uniform(Rng& rng, std::vector<int> shape, double scale) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

// Fan-in scaled init for dense and conv weights.
inline Tensor kaiming(Rng& rng, std::vector<int> shape) {
    long long fan_in = 1;
    for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
    const double scale = std::sqrt(3.0 / static_cast<double>(fan_in));
    return uniform(rng, std::move(shape), scale);
}

// Small uniform bias init. Keeps pre-activations off the exact relu/hinge
// kink manifold that zero biases would create on sparse inputs.
inline Tensor bias(Rng& rng, int size, long long fan_in) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return uniform(rng, {size}, scale);
}

} // namespace init

struct TextEncoderParams {
    ad::Var embed; // (vocab, C_l)
    ad::Var w1, b1;
    ad::Var w2, b2;

    TextEncoderParams() = default;

    TextEncoderParams(Rng& rng, int vocab_size, int c_l) {
        embed = ad::parameter(init::uniform(rng, {vocab_size, c_l}, 0.5));
        w1 = ad::parameter(init::kaiming(rng, {c_l, c_l}));
        b1 = ad::parameter(init::bias(rng, c_l, c_l));
        w2 = ad::parameter(init::kaiming(rng, {c_l, c_l}));
        b2 = ad::parameter(init::bias(rng, c_l, c_l));
    }
};

inline ad::Var encode_text(const TextEncoderParams& p, const Vocabulary& vocab,
                           const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw std::invalid_argument("encode_text: empty token list");
    const ad::Var pooled = ad::embed_mean(p.embed, vocab.encode(tokens));
    const ad::Var hidden = ad::relu(ad::affine(p.w1, p.b1, pooled));
    return ad::affine(p.w2, p.b2, hidden);
}

struct ImageEncoderParams {
    ad::Var w1, b1; // 3   -> c1, stride 2
    ad::Var w2, b2; // c1  -> c2, stride 2
    ad::Var w3, b3; // c2  -> C_v, stride 1

    int c1 = 0, c2 = 0, c_v = 0;

    ImageEncoderParams() = default;

    ImageEncoderParams(Rng& rng, int c_v_, int c1_ = 24, int c2_ = 32)
        : c1(c1_), c2(c2_), c_v(c_v_) {
        w1 = ad::parameter(init::kaiming(rng, {c1, 3, 3, 3}));
        b1 = ad::parameter(init::bias(rng, c1, 3 * 9));
        w2 = ad::parameter(init::kaiming(rng, {c2, c1, 3, 3}));
        b2 = ad::parameter(init::bias(rng, c2, static_cast<long long>(c1) * 9));
        w3 = ad::parameter(init::kaiming(rng, {c_v, c2, 3, 3}));
        b3 = ad::parameter(init::bias(rng, c_v, static_cast<long long>(c2) * 9));
    }
};

constexpr int kEncoderStride = 4;

// pixels: (3, H_img, W_img) normalized to [0,1]. Output: (C_v, H/4, W/4).
inline ad::Var encode_image(const ImageEncoderParams& p, const ad::Var& pixels) {
    const Tensor& x = pixels.val();
    if (x.rank() != 3 || x.size(0) != 3)
        throw std::invalid_argument("encode_image: expected (3,H,W) input");
    if (x.size(1) % kEncoderStride != 0 || x.size(2) % kEncoderStride != 0)
        throw std::invalid_argument("encode_image: dimensions not divisible by stride " +
                                    std::to_string(kEncoderStride));
    ad::Var h = ad::relu(ad::conv2d(pixels, p.w1, p.b1, /*stride=*/2, /*pad=*/1));
    h = ad::relu(ad::conv2d(h, p.w2, p.b2, /*stride=*/2, /*pad=*/1));
    return ad::conv2d(h, p.w3, p.b3, /*stride=*/1, /*pad=*/1);
}

} // namespace gres
