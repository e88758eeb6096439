#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "forkcast/rng.hpp"
#include "forkcast/tensor.hpp"

namespace forkcast {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
};

/// Named parameters with gradient slots of identical shape. Creation order
/// is preserved so that initialization from a seed is reproducible.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

    uint64_t seed() const { return seed_; }

    Tensor& create(const std::string& name, std::vector<int> shape);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    Tensor& grad(const std::string& name);
    const Tensor& grad(const std::string& name) const;

    const std::vector<std::string>& names() const { return names_; }
    Eigen::Index param_count() const;

    void zero_grad();
    double grad_sq_norm() const;
    void sgd_step(double lr);

private:
    uint64_t seed_;
    std::vector<std::string> names_;
    std::map<std::string, size_t> index_;
    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
};

/// Work counters accumulated while a tape executes. `units` is a
/// flop-proportional tally of inner-loop operations; `ingested` counts
/// input elements handed to encoders (window materialization included).
struct OpCounter {
    double units = 0;
    double ingested = 0;
    long encoder_calls = 0;
};

/// Records primitive operations in execution order (hence topologically
/// sorted) and replays them in reverse for gradients. A tape is confined
/// to one logical run; with gradients disabled it stores forward values
/// only and skips all backward bookkeeping.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }

    Var leaf(Tensor value);
    Var param(ParamStore& store, const std::string& name);

    /// Seeds d(loss)/d(loss) = 1, sweeps the tape once in reverse, then
    /// adds leaf gradients into their bound parameter stores. Repeated
    /// calls accumulate into the stores.
    void backward(Var loss);

    const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    int num_nodes() const { return static_cast<int>(nodes_.size()); }

    double op_units() const { return counter_.units; }
    OpCounter& counter() { return counter_; }
    const OpCounter& counter_view() const { return counter_; }

    // --- interface for primitive implementations ---
    using BackFn = std::function<void(Tape&, int self)>;
    Var emit(Tensor value, BackFn back);
    void save(int id, Tensor t);
    const Tensor& saved(int id, size_t k) const;
    const Tensor& grad_of(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
    /// Gradient accumulator; zeroes the slot on first touch per sweep.
    Tensor& grad_slot(int id);
    void add_units(double u) { counter_.units += u; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        BackFn back;
        std::vector<Tensor> saved;
    };

    struct Binding {
        int node;
        ParamStore* store;
        std::string name;
    };

    bool grad_enabled_;
    std::vector<Node> nodes_;
    std::vector<Binding> bindings_;
    OpCounter counter_;
};

// --- primitives -----------------------------------------------------------
// All primitives record their forward value on the tape and, when gradients
// are enabled, a closure producing input gradients. Forward results are
// computed row by row so that a row of the output depends only on the same
// rows of the inputs; slice identities hold bitwise.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var relu(Var a);

/// x (m,k) @ W (k,n) + b (n) -> (m,n)
Var affine(Var x, Var W, Var b);

/// Per-group affine: x (m, G*k), W (G,k,n), b (G,n) -> (m, G*n).
Var grouped_affine(Var x, Var W, Var b);

/// Causal 1-d convolution: x (T,Cin), kernel (K,Cin,Cout), bias (Cout).
/// out[t] = sum_j x[t - j*dilation] @ kernel[j] + bias, zero padded on the left.
Var dilated_causal_conv1d(Var x, Var kernel, Var bias, int dilation);

/// Vanilla tanh cell, one step: x_t (1,dx), h_prev (1,dh) -> (1,dh).
Var recurrent_cell_step(Var x_t, Var h_prev, Var Wx, Var Wh, Var b);

/// LSTM step; gate order [input, forget, cell, output] stacked in the
/// 4*dh columns of Wx/Wh/b. Returns {h, c}.
std::pair<Var, Var> lstm_cell_step(Var x_t, Var h_prev, Var c_prev, Var Wx, Var Wh, Var b);

/// Multi-head scaled dot-product attention over rows of Q,K,V (T,d).
/// The causal mask is implicit (row t attends to rows <= t). Dropout on the
/// attention weights is applied only when `training` and is derived
/// deterministically from `dropout_seed`.
Var scaled_dot_attention(Var Q, Var K, Var V, bool causal, int n_heads,
                         double dropout = 0.0, bool training = false,
                         uint64_t dropout_seed = 0);

/// (T,d) -> (T, L*d): row t is the concatenation of rows t-L+1..t, zero
/// padded at the series start.
Var sliding_window_embed(Var x, int L);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var x, int row0, int row1);  // [row0, row1)
Var reshape(Var x, std::vector<int> shape);
Var sum(Var x);  // scalar

/// Mean over entries selected by a 0/1 mask. The mask either matches x's
/// shape or matches its leading axes, broadcasting over the trailing ones.
/// Throws EmptyLossError when nothing is selected.
Var masked_mean(Var x, const Tensor& mask);

/// Elementwise pinball loss of predictions (..., Q) against targets (...),
/// one column per quantile level.
Var pinball_elem(const Tensor& targets, Var yhat, const std::vector<double>& quantiles);

// --- verification ----------------------------------------------------------

struct GradCheckResult {
    double max_rel_error = 0;
    int coords_checked = 0;
    int coords_skipped = 0;  // coordinates straddling a kink, excluded
};

/// Central finite differences on sampled coordinates (roughly `max_coords`
/// spread across parameters); reports max over coordinates of
/// |analytic - numeric| / max(1, |numeric|). `f` must rebuild the loss on
/// the tape it is given.
GradCheckResult grad_check(const std::function<Var(ParamStore&, Tape&)>& f, ParamStore& store,
                           double epsilon, int max_coords, uint64_t seed);

}  // namespace forkcast
