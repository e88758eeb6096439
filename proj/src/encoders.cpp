#include "forkcast/encoders.hpp"

#include <cmath>

#include "forkcast/errors.hpp"

namespace forkcast {

EncoderFamily encoder_family_from_string(const std::string& s) {
    if (s == "mlp") return EncoderFamily::MLP;
    if (s == "rnn") return EncoderFamily::RNN;
    if (s == "lstm") return EncoderFamily::LSTM;
    if (s == "cnn") return EncoderFamily::CNN;
    if (s == "transformer" || s == "attention") return EncoderFamily::Transformer;
    throw DomainError("unknown encoder family: " + s);
}

std::string to_string(EncoderFamily f) {
    switch (f) {
        case EncoderFamily::MLP: return "mlp";
        case EncoderFamily::RNN: return "rnn";
        case EncoderFamily::LSTM: return "lstm";
        case EncoderFamily::CNN: return "cnn";
        case EncoderFamily::Transformer: return "transformer";
    }
    return "?";
}

int receptive_field(const EncoderSpec& spec) {
    switch (spec.family) {
        case EncoderFamily::MLP:
            return 2 * spec.horizon;
        case EncoderFamily::CNN: {
            int s = 0;
            for (int d : spec.cnn_dilations) s += d;
            return 1 + (spec.cnn_kernel - 1) * s;
        }
        default:
            return kUnboundedField;
    }
}

int hidden_dim(const EncoderSpec& spec) {
    switch (spec.family) {
        case EncoderFamily::MLP: return spec.mlp_width;
        case EncoderFamily::RNN:
        case EncoderFamily::LSTM: return spec.rnn_width;
        case EncoderFamily::CNN: return spec.cnn_channels;
        case EncoderFamily::Transformer: return spec.tf_hidden;
    }
    return 0;
}

namespace {

void init_matrix(Tensor& t, int fan_in, int fan_out, Rng& rng) {
    double r = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(-r, r);
}

std::vector<int> flat_dilations(const EncoderSpec& spec) {
    std::vector<int> ds;
    for (const auto& group : spec.rnn_dilations)
        for (int d : group) {
            if (d < 1) throw DomainError("dilations must be positive");
            ds.push_back(d);
        }
    return ds;
}

}  // namespace

void init_encoder_params(const EncoderSpec& spec, ParamStore& store, Rng& rng,
                         const std::string& prefix) {
    switch (spec.family) {
        case EncoderFamily::MLP: {
            int in = 2 * spec.horizon * spec.d_in;
            for (int l = 0; l < spec.mlp_layers; ++l) {
                int out = spec.mlp_width;
                auto& W = store.create(prefix + "mlp.W" + std::to_string(l), {in, out});
                init_matrix(W, in, out, rng);
                store.create(prefix + "mlp.b" + std::to_string(l), {out});
                in = out;
            }
            break;
        }
        case EncoderFamily::RNN: {
            int in = spec.d_in;
            auto ds = flat_dilations(spec);
            for (size_t l = 0; l < ds.size(); ++l) {
                int w = spec.rnn_width;
                auto& Wx = store.create(prefix + "rnn.Wx" + std::to_string(l), {in, w});
                init_matrix(Wx, in, w, rng);
                auto& Wh = store.create(prefix + "rnn.Wh" + std::to_string(l), {w, w});
                init_matrix(Wh, w, w, rng);
                store.create(prefix + "rnn.b" + std::to_string(l), {w});
                in = w;
            }
            break;
        }
        case EncoderFamily::LSTM: {
            int in = spec.d_in;
            auto ds = flat_dilations(spec);
            for (size_t l = 0; l < ds.size(); ++l) {
                int w = spec.rnn_width;
                auto& Wx = store.create(prefix + "lstm.Wx" + std::to_string(l), {in, 4 * w});
                init_matrix(Wx, in, 4 * w, rng);
                auto& Wh = store.create(prefix + "lstm.Wh" + std::to_string(l), {w, 4 * w});
                init_matrix(Wh, w, 4 * w, rng);
                auto& b = store.create(prefix + "lstm.b" + std::to_string(l), {4 * w});
                // Forget gate bias starts open.
                for (int u = 0; u < w; ++u) b[w + u] = 1.0;
                in = w;
            }
            break;
        }
        case EncoderFamily::CNN: {
            int in = spec.d_in;
            for (size_t l = 0; l < spec.cnn_dilations.size(); ++l) {
                int out = spec.cnn_channels;
                auto& K = store.create(prefix + "cnn.K" + std::to_string(l),
                                       {spec.cnn_kernel, in, out});
                init_matrix(K, spec.cnn_kernel * in, out, rng);
                store.create(prefix + "cnn.b" + std::to_string(l), {out});
                in = out;
            }
            break;
        }
        case EncoderFamily::Transformer: {
            int d = spec.tf_hidden;
            for (size_t p = 0; p < spec.tf_patch_lens.size(); ++p) {
                int in = spec.tf_patch_lens[p] * spec.d_in;
                auto& W = store.create(prefix + "tf.We" + std::to_string(p), {in, d});
                init_matrix(W, in, d, rng);
                store.create(prefix + "tf.be" + std::to_string(p), {d});
            }
            int cat = static_cast<int>(spec.tf_patch_lens.size()) * d;
            auto& Wc = store.create(prefix + "tf.Wc", {cat, d});
            init_matrix(Wc, cat, d, rng);
            store.create(prefix + "tf.bc", {d});
            for (int l = 0; l < spec.tf_layers; ++l) {
                std::string lp = prefix + "tf.l" + std::to_string(l) + ".";
                for (const char* name : {"Wq", "Wk", "Wv", "Wo", "W1", "W2"}) {
                    auto& W = store.create(lp + name, {d, d});
                    init_matrix(W, d, d, rng);
                    store.create(lp + std::string(name).replace(0, 1, "b"), {d});
                }
            }
            break;
        }
    }
}

Eigen::Index encoder_param_count(const EncoderSpec& spec) {
    switch (spec.family) {
        case EncoderFamily::MLP: {
            Eigen::Index n = 0;
            int in = 2 * spec.horizon * spec.d_in;
            for (int l = 0; l < spec.mlp_layers; ++l) {
                n += static_cast<Eigen::Index>(in) * spec.mlp_width + spec.mlp_width;
                in = spec.mlp_width;
            }
            return n;
        }
        case EncoderFamily::RNN: {
            Eigen::Index n = 0;
            int in = spec.d_in, w = spec.rnn_width;
            for (const auto& group : spec.rnn_dilations)
                for (size_t i = 0; i < group.size(); ++i) {
                    n += static_cast<Eigen::Index>(in) * w + static_cast<Eigen::Index>(w) * w + w;
                    in = w;
                }
            return n;
        }
        case EncoderFamily::LSTM: {
            Eigen::Index n = 0;
            int in = spec.d_in, w = spec.rnn_width;
            for (const auto& group : spec.rnn_dilations)
                for (size_t i = 0; i < group.size(); ++i) {
                    n += static_cast<Eigen::Index>(in) * 4 * w +
                         static_cast<Eigen::Index>(w) * 4 * w + 4 * w;
                    in = w;
                }
            return n;
        }
        case EncoderFamily::CNN: {
            Eigen::Index n = 0;
            int in = spec.d_in, out = spec.cnn_channels;
            for (size_t l = 0; l < spec.cnn_dilations.size(); ++l) {
                n += static_cast<Eigen::Index>(spec.cnn_kernel) * in * out + out;
                in = out;
            }
            return n;
        }
        case EncoderFamily::Transformer: {
            Eigen::Index n = 0;
            int d = spec.tf_hidden;
            for (int p : spec.tf_patch_lens) n += static_cast<Eigen::Index>(p) * spec.d_in * d + d;
            n += static_cast<Eigen::Index>(spec.tf_patch_lens.size()) * d * d + d;
            n += static_cast<Eigen::Index>(spec.tf_layers) * 6 * (static_cast<Eigen::Index>(d) * d + d);
            return n;
        }
    }
    return 0;
}

namespace {

Var encode_mlp(const EncoderSpec& spec, ParamStore& store, Tape& tape, Var x,
               const std::string& prefix) {
    Var z = sliding_window_embed(x, 2 * spec.horizon);
    for (int l = 0; l < spec.mlp_layers; ++l) {
        z = affine(z, tape.param(store, prefix + "mlp.W" + std::to_string(l)),
                   tape.param(store, prefix + "mlp.b" + std::to_string(l)));
        z = relu(z);
    }
    return z;
}

Var encode_recurrent(const EncoderSpec& spec, ParamStore& store, Tape& tape, Var x,
                     const std::string& prefix, bool lstm) {
    auto ds = flat_dilations(spec);
    int T = x.value().dim(0);
    int w = spec.rnn_width;
    Var layer_in = x;
    for (size_t l = 0; l < ds.size(); ++l) {
        std::string base = prefix + (lstm ? "lstm." : "rnn.");
        Var Wx = tape.param(store, base + "Wx" + std::to_string(l));
        Var Wh = tape.param(store, base + "Wh" + std::to_string(l));
        Var b = tape.param(store, base + "b" + std::to_string(l));
        Var zero = tape.leaf(Tensor({1, w}));
        int dil = ds[l];
        std::vector<Var> hs, cs;
        hs.reserve(static_cast<size_t>(T));
        if (lstm) cs.reserve(static_cast<size_t>(T));
        for (int t = 0; t < T; ++t) {
            Var xt = slice_rows(layer_in, t, t + 1);
            Var hprev = (t - dil >= 0) ? hs[static_cast<size_t>(t - dil)] : zero;
            if (lstm) {
                Var cprev = (t - dil >= 0) ? cs[static_cast<size_t>(t - dil)] : zero;
                auto [h, c] = lstm_cell_step(xt, hprev, cprev, Wx, Wh, b);
                hs.push_back(h);
                cs.push_back(c);
            } else {
                hs.push_back(recurrent_cell_step(xt, hprev, Wx, Wh, b));
            }
        }
        layer_in = concat_rows(hs);
    }
    return layer_in;
}

Var encode_cnn(const EncoderSpec& spec, ParamStore& store, Tape& tape, Var x,
               const std::string& prefix) {
    Var z = x;
    for (size_t l = 0; l < spec.cnn_dilations.size(); ++l) {
        z = dilated_causal_conv1d(z, tape.param(store, prefix + "cnn.K" + std::to_string(l)),
                                  tape.param(store, prefix + "cnn.b" + std::to_string(l)),
                                  spec.cnn_dilations[l]);
        z = relu(z);
    }
    return z;
}

Var encode_transformer(const EncoderSpec& spec, ParamStore& store, Tape& tape, Var x,
                       const EncodeOptions& opt) {
    const std::string& prefix = opt.prefix;
    std::vector<Var> streams;
    for (size_t p = 0; p < spec.tf_patch_lens.size(); ++p) {
        Var e = sliding_window_embed(x, spec.tf_patch_lens[p]);
        streams.push_back(affine(e, tape.param(store, prefix + "tf.We" + std::to_string(p)),
                                 tape.param(store, prefix + "tf.be" + std::to_string(p))));
    }
    Var z = affine(concat_cols(streams), tape.param(store, prefix + "tf.Wc"),
                   tape.param(store, prefix + "tf.bc"));
    for (int l = 0; l < spec.tf_layers; ++l) {
        std::string lp = prefix + "tf.l" + std::to_string(l) + ".";
        Var q = affine(z, tape.param(store, lp + "Wq"), tape.param(store, lp + "bq"));
        Var k = affine(z, tape.param(store, lp + "Wk"), tape.param(store, lp + "bk"));
        Var v = affine(z, tape.param(store, lp + "Wv"), tape.param(store, lp + "bv"));
        Var a = scaled_dot_attention(q, k, v, /*causal=*/true, spec.tf_heads, spec.tf_dropout,
                                     opt.training, derive_seed(opt.dropout_seed, static_cast<uint64_t>(l)));
        z = add(z, affine(a, tape.param(store, lp + "Wo"), tape.param(store, lp + "bo")));
        Var f = relu(affine(z, tape.param(store, lp + "W1"), tape.param(store, lp + "b1")));
        z = add(z, affine(f, tape.param(store, lp + "W2"), tape.param(store, lp + "b2")));
    }
    return z;
}

}  // namespace

Var encode_full(const EncoderSpec& spec, ParamStore& store, Tape& tape, Var x,
                const EncodeOptions& opt) {
    if (x.value().ndim() != 2 || x.value().dim(1) != spec.d_in)
        throw ShapeError("encoder input must be (T, d_in)");
    tape.counter().encoder_calls += 1;
    tape.counter().ingested += static_cast<double>(x.value().size());
    tape.add_units(static_cast<double>(x.value().size()));
    switch (spec.family) {
        case EncoderFamily::MLP: return encode_mlp(spec, store, tape, x, opt.prefix);
        case EncoderFamily::RNN: return encode_recurrent(spec, store, tape, x, opt.prefix, false);
        case EncoderFamily::LSTM: return encode_recurrent(spec, store, tape, x, opt.prefix, true);
        case EncoderFamily::CNN: return encode_cnn(spec, store, tape, x, opt.prefix);
        case EncoderFamily::Transformer: return encode_transformer(spec, store, tape, x, opt);
    }
    throw DomainError("unreachable encoder family");
}

Var encode_window(const EncoderSpec& spec, ParamStore& store, Tape& tape, Var window,
                  const EncodeOptions& opt) {
    Var hs = encode_full(spec, store, tape, window, opt);
    int T = hs.value().dim(0);
    return slice_rows(hs, T - 1, T);
}

}  // namespace forkcast
