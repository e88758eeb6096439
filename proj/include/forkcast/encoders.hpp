#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "forkcast/autodiff.hpp"

namespace forkcast {

enum class EncoderFamily { MLP, RNN, LSTM, CNN, Transformer };

EncoderFamily encoder_family_from_string(const std::string& s);
std::string to_string(EncoderFamily f);

/// Encoder hyperparameters. Defaults follow the reference configuration for
/// each family; `horizon` drives the MLP's causal input window (2H).
struct EncoderSpec {
    EncoderFamily family = EncoderFamily::CNN;
    int d_in = 1;
    int horizon = 18;

    int mlp_layers = 3;
    int mlp_width = 128;

    int rnn_width = 128;
    std::vector<std::vector<int>> rnn_dilations = {{1, 2}, {4, 8}};

    int cnn_kernel = 2;
    std::vector<int> cnn_dilations = {1, 2, 4, 8, 16, 32};
    int cnn_channels = 30;

    int tf_hidden = 128;
    int tf_layers = 3;
    std::vector<int> tf_patch_lens = {2, 6, 8};
    int tf_heads = 4;
    double tf_dropout = 0.1;
};

inline constexpr int kUnboundedField = std::numeric_limits<int>::max();

/// Trailing inputs that can influence the hidden state at a position:
/// CNN 1 + (kernel-1) * sum(dilations), MLP 2H, recurrent/attention
/// families unbounded.
int receptive_field(const EncoderSpec& spec);

int hidden_dim(const EncoderSpec& spec);

/// Creates all encoder parameters under `prefix` in a fixed order.
void init_encoder_params(const EncoderSpec& spec, ParamStore& store, Rng& rng,
                         const std::string& prefix = "enc.");

Eigen::Index encoder_param_count(const EncoderSpec& spec);

struct EncodeOptions {
    bool training = false;
    uint64_t dropout_seed = 0;
    std::string prefix = "enc.";
};

/// One hidden row per position of x (T, d_in): a single pass over the
/// series, causal in t.
Var encode_full(const EncoderSpec& spec, ParamStore& store, Tape& tape, Var x,
                const EncodeOptions& opt = {});

/// Hidden state for the final position of a window (L, d_in).
Var encode_window(const EncoderSpec& spec, ParamStore& store, Tape& tape, Var window,
                  const EncodeOptions& opt = {});

}  // namespace forkcast
