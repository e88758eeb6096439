#include "forkcast/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace forkcast {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": shape mismatch");
}

}  // namespace

// --- ParamStore -------------------------------------------------------------

Tensor& ParamStore::create(const std::string& name, std::vector<int> shape) {
    if (index_.count(name)) throw ContractError("parameter already exists: " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    values_.emplace_back(shape);
    grads_.emplace_back(shape);
    return values_.back();
}

Tensor& ParamStore::value(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return values_[it->second];
}

const Tensor& ParamStore::value(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return values_[it->second];
}

Tensor& ParamStore::grad(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return grads_[it->second];
}

const Tensor& ParamStore::grad(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return grads_[it->second];
}

Eigen::Index ParamStore::param_count() const {
    Eigen::Index n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& g : grads_) g.array().setZero();
}

double ParamStore::grad_sq_norm() const {
    double s = 0;
    for (const auto& g : grads_) s += g.array().square().sum();
    return s;
}

void ParamStore::sgd_step(double lr) {
    for (size_t i = 0; i < values_.size(); ++i)
        values_[i].array() -= lr * grads_[i].array();
}

// --- Tape -------------------------------------------------------------------

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(ParamStore& store, const std::string& name) {
    Var v = leaf(store.value(name));
    if (grad_enabled_) bindings_.push_back(Binding{v.id, &store, name});
    return v;
}

Var Tape::emit(Tensor value, BackFn back) {
    nodes_.push_back(Node{std::move(value), {}, false,
                          grad_enabled_ ? std::move(back) : BackFn{}, {}});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::save(int id, Tensor t) {
    if (grad_enabled_) nodes_[static_cast<size_t>(id)].saved.push_back(std::move(t));
}

const Tensor& Tape::saved(int id, size_t k) const {
    return nodes_[static_cast<size_t>(id)].saved[k];
}

Tensor& Tape::grad_slot(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.has_grad) {
        n.grad = Tensor::zeros(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    if (!grad_enabled_) throw ContractError("backward on a gradient-disabled tape");
    if (loss.tape != this) throw ContractError("loss recorded on a different tape");
    if (loss.value().size() != 1) throw ContractError("backward requires a scalar loss");

    for (auto& n : nodes_) n.has_grad = false;
    grad_slot(loss.id)[0] = 1.0;

    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.has_grad && n.back) n.back(*this, id);
    }
    for (const Binding& b : bindings_) {
        Node& n = nodes_[static_cast<size_t>(b.node)];
        if (n.has_grad) b.store->grad(b.name).array() += n.grad.array();
    }
}

// --- elementwise ------------------------------------------------------------

Var add(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    out.array() += b.value().array();
    a.tape->add_units(static_cast<double>(out.size()));
    int ia = a.id, ib = b.id;
    return a.tape->emit(std::move(out), [ia, ib](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        t.grad_slot(ia).array() += g.array();
        t.grad_slot(ib).array() += g.array();
    });
}

Var sub(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    out.array() -= b.value().array();
    a.tape->add_units(static_cast<double>(out.size()));
    int ia = a.id, ib = b.id;
    return a.tape->emit(std::move(out), [ia, ib](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        t.grad_slot(ia).array() += g.array();
        t.grad_slot(ib).array() -= g.array();
    });
}

Var mul(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    out.array() *= b.value().array();
    a.tape->add_units(static_cast<double>(out.size()));
    int ia = a.id, ib = b.id;
    return a.tape->emit(std::move(out), [ia, ib](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        t.grad_slot(ia).array() += g.array() * t.value(ib).array();
        t.grad_slot(ib).array() += g.array() * t.value(ia).array();
    });
}

Var scale(Var a, double c) {
    Tensor out = a.value();
    out.array() *= c;
    a.tape->add_units(static_cast<double>(out.size()));
    int ia = a.id;
    return a.tape->emit(std::move(out), [ia, c](Tape& t, int self) {
        t.grad_slot(ia).array() += c * t.grad_of(self).array();
    });
}

Var relu(Var a) {
    Tensor out = a.value();
    out.array() = out.array().max(0.0);
    a.tape->add_units(static_cast<double>(out.size()));
    int ia = a.id;
    return a.tape->emit(std::move(out), [ia](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& x = t.value(ia);
        // Subgradient 0 at exactly 0.
        t.grad_slot(ia).array() += g.array() * (x.array() > 0.0).cast<double>();
    });
}

// --- affine family ----------------------------------------------------------

Var affine(Var x, Var W, Var b) {
    const Tensor& xv = x.value();
    const Tensor& Wv = W.value();
    const Tensor& bv = b.value();
    if (xv.ndim() != 2 || Wv.ndim() != 2) throw ShapeError("affine expects 2-d x and W");
    int m = xv.dim(0), k = xv.dim(1), n = Wv.dim(1);
    if (Wv.dim(0) != k) throw ShapeError("affine: inner dimensions differ");
    if (bv.size() != n) throw ShapeError("affine: bias length mismatch");

    Tensor out = Tensor::uninit({m, n});
    auto X = xv.mat();
    auto Wm = Wv.mat();
    auto O = out.mat();
    ConstVecMap bvec(bv.data(), n);
    // Row-at-a-time keeps each output row a pure function of its input row.
    for (int i = 0; i < m; ++i) O.row(i).noalias() = X.row(i) * Wm;
    O.rowwise() += bvec.transpose();
    x.tape->add_units(static_cast<double>(m) * k * n);

    int ix = x.id, iW = W.id, ib = b.id;
    return x.tape->emit(std::move(out), [ix, iW, ib, m, k, n](Tape& t, int self) {
        auto G = t.grad_of(self).mat(m, n);
        auto X = t.value(ix).mat(m, k);
        auto Wm = t.value(iW).mat(k, n);
        t.grad_slot(ix).mat(m, k).noalias() += G * Wm.transpose();
        t.grad_slot(iW).mat(k, n).noalias() += X.transpose() * G;
        VecMap(t.grad_slot(ib).data(), n) += G.colwise().sum().transpose();
        t.add_units(2.0 * m * k * n);
    });
}

Var grouped_affine(Var x, Var W, Var b) {
    const Tensor& xv = x.value();
    const Tensor& Wv = W.value();
    const Tensor& bv = b.value();
    if (Wv.ndim() != 3 || bv.ndim() != 2) throw ShapeError("grouped_affine expects W (G,k,n), b (G,n)");
    int G = Wv.dim(0), k = Wv.dim(1), n = Wv.dim(2);
    if (xv.ndim() != 2 || xv.dim(1) != G * k) throw ShapeError("grouped_affine: x columns != G*k");
    if (bv.dim(0) != G || bv.dim(1) != n) throw ShapeError("grouped_affine: bias shape");
    int m = xv.dim(0);

    Tensor out = Tensor::uninit({m, G * n});
    for (int g = 0; g < G; ++g) {
        ConstMatMap Wg(Wv.data() + static_cast<Eigen::Index>(g) * k * n, k, n);
        ConstVecMap bg(bv.data() + static_cast<Eigen::Index>(g) * n, n);
        for (int i = 0; i < m; ++i) {
            ConstMatMap xg(xv.data() + static_cast<Eigen::Index>(i) * G * k + g * k, 1, k);
            MatMap og(out.data() + static_cast<Eigen::Index>(i) * G * n + g * n, 1, n);
            og.noalias() = xg * Wg;
            og += bg.transpose();
        }
    }
    x.tape->add_units(static_cast<double>(m) * G * k * n);

    int ix = x.id, iW = W.id, ib = b.id;
    return x.tape->emit(std::move(out), [ix, iW, ib, m, G, k, n](Tape& t, int self) {
        const Tensor& gv = t.grad_of(self);
        const Tensor& xv = t.value(ix);
        const Tensor& Wv = t.value(iW);
        Tensor& gx = t.grad_slot(ix);
        Tensor& gW = t.grad_slot(iW);
        Tensor& gb = t.grad_slot(ib);
        for (int g = 0; g < G; ++g) {
            ConstMatMap Wg(Wv.data() + static_cast<Eigen::Index>(g) * k * n, k, n);
            MatMap gWg(gW.data() + static_cast<Eigen::Index>(g) * k * n, k, n);
            VecMap gbg(gb.data() + static_cast<Eigen::Index>(g) * n, n);
            for (int i = 0; i < m; ++i) {
                ConstMatMap gi(gv.data() + static_cast<Eigen::Index>(i) * G * n + g * n, 1, n);
                ConstMatMap xi(xv.data() + static_cast<Eigen::Index>(i) * G * k + g * k, 1, k);
                MatMap gxi(gx.data() + static_cast<Eigen::Index>(i) * G * k + g * k, 1, k);
                gxi.noalias() += gi * Wg.transpose();
                gWg.noalias() += xi.transpose() * gi;
                gbg += gi.transpose();
            }
        }
        t.add_units(2.0 * m * G * k * n);
    });
}

// --- convolution ------------------------------------------------------------

Var dilated_causal_conv1d(Var x, Var kernel, Var bias, int dilation) {
    if (dilation < 1) throw ShapeError("dilation must be >= 1");
    const Tensor& xv = x.value();
    const Tensor& kv = kernel.value();
    const Tensor& bv = bias.value();
    if (xv.ndim() != 2 || kv.ndim() != 3) throw ShapeError("conv1d expects x (T,Cin), kernel (K,Cin,Cout)");
    int T = xv.dim(0), cin = xv.dim(1);
    int K = kv.dim(0), cout = kv.dim(2);
    if (kv.dim(1) != cin) throw ShapeError("conv1d: channel mismatch");
    if (bv.size() != cout) throw ShapeError("conv1d: bias length mismatch");

    Tensor out = Tensor::uninit({T, cout});
    auto X = xv.mat();
    auto O = out.mat();
    ConstVecMap bvec(bv.data(), cout);
    for (int t = 0; t < T; ++t) {
        auto row = O.row(t);
        row = bvec.transpose();
        for (int j = 0; j < K; ++j) {
            int src = t - j * dilation;
            if (src < 0) continue;  // left zero padding
            ConstMatMap Kj(kv.data() + static_cast<Eigen::Index>(j) * cin * cout, cin, cout);
            row.noalias() += X.row(src) * Kj;
        }
    }
    x.tape->add_units(static_cast<double>(T) * K * cin * cout);

    int ix = x.id, ik = kernel.id, ib = bias.id;
    return x.tape->emit(std::move(out), [ix, ik, ib, T, cin, cout, K, dilation](Tape& t, int self) {
        const Tensor& gv = t.grad_of(self);
        auto G = gv.mat(T, cout);
        auto X = t.value(ix).mat(T, cin);
        const Tensor& kv = t.value(ik);
        Tensor& gx = t.grad_slot(ix);
        Tensor& gk = t.grad_slot(ik);
        auto GX = gx.mat(T, cin);
        VecMap gb(t.grad_slot(ib).data(), cout);
        gb += G.colwise().sum().transpose();
        for (int j = 0; j < K; ++j) {
            ConstMatMap Kj(kv.data() + static_cast<Eigen::Index>(j) * cin * cout, cin, cout);
            MatMap GKj(gk.data() + static_cast<Eigen::Index>(j) * cin * cout, cin, cout);
            for (int tt = 0; tt < T; ++tt) {
                int src = tt - j * dilation;
                if (src < 0) continue;
                GX.row(src).noalias() += G.row(tt) * Kj.transpose();
                GKj.noalias() += X.row(src).transpose() * G.row(tt);
            }
        }
        t.add_units(2.0 * T * K * cin * cout);
    });
}

// --- recurrent cells ----------------------------------------------------------

Var recurrent_cell_step(Var x_t, Var h_prev, Var Wx, Var Wh, Var b) {
    const Tensor& xv = x_t.value();
    const Tensor& hv = h_prev.value();
    int dx = xv.dim(1), dh = hv.dim(1);
    if (xv.dim(0) != 1 || hv.dim(0) != 1) throw ShapeError("cell step expects single rows");
    if (Wx.value().dim(0) != dx || Wx.value().dim(1) != dh) throw ShapeError("cell: Wx shape");
    if (Wh.value().dim(0) != dh || Wh.value().dim(1) != dh) throw ShapeError("cell: Wh shape");
    if (b.value().size() != dh) throw ShapeError("cell: bias length");

    Tensor out = Tensor::uninit({1, dh});
    out.mat().noalias() = xv.mat() * Wx.value().mat();
    out.mat().noalias() += hv.mat() * Wh.value().mat();
    out.array() += b.value().array();
    out.array() = out.array().tanh();
    x_t.tape->add_units(static_cast<double>(dx + dh) * dh);

    int ix = x_t.id, ih = h_prev.id, iwx = Wx.id, iwh = Wh.id, ib = b.id;
    return x_t.tape->emit(std::move(out), [ix, ih, iwx, iwh, ib, dx, dh](Tape& t, int self) {
        const Tensor& h = t.value(self);
        Tensor dz({1, dh});
        dz.array() = t.grad_of(self).array() * (1.0 - h.array().square());
        auto DZ = dz.mat();
        t.grad_slot(ix).mat(1, dx).noalias() += DZ * t.value(iwx).mat(dx, dh).transpose();
        t.grad_slot(ih).mat(1, dh).noalias() += DZ * t.value(iwh).mat(dh, dh).transpose();
        t.grad_slot(iwx).mat(dx, dh).noalias() += t.value(ix).mat(1, dx).transpose() * DZ;
        t.grad_slot(iwh).mat(dh, dh).noalias() += t.value(ih).mat(1, dh).transpose() * DZ;
        t.grad_slot(ib).array() += dz.array();
        t.add_units(2.0 * (dx + dh) * dh);
    });
}

namespace {
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
}

std::pair<Var, Var> lstm_cell_step(Var x_t, Var h_prev, Var c_prev, Var Wx, Var Wh, Var b) {
    const Tensor& xv = x_t.value();
    const Tensor& hv = h_prev.value();
    const Tensor& cv = c_prev.value();
    int dx = xv.dim(1), dh = hv.dim(1);
    if (cv.dim(1) != dh) throw ShapeError("lstm: cell state width");
    if (Wx.value().dim(1) != 4 * dh || Wh.value().dim(1) != 4 * dh || b.value().size() != 4 * dh)
        throw ShapeError("lstm: gate stack width must be 4*dh");

    Tensor z = Tensor::uninit({1, 4 * dh});
    z.mat().noalias() = xv.mat() * Wx.value().mat();
    z.mat().noalias() += hv.mat() * Wh.value().mat();
    z.array() += b.value().array();

    Tensor gates = Tensor::uninit({1, 4 * dh});  // activated: [i, f, g, o]
    Tensor c = Tensor::uninit({1, dh});
    Tensor h = Tensor::uninit({1, dh});
    for (int u = 0; u < dh; ++u) {
        double gi = sigmoid(z[u]);
        double gf = sigmoid(z[dh + u]);
        double gg = std::tanh(z[2 * dh + u]);
        double go = sigmoid(z[3 * dh + u]);
        gates[u] = gi;
        gates[dh + u] = gf;
        gates[2 * dh + u] = gg;
        gates[3 * dh + u] = go;
        c[u] = gf * cv[u] + gi * gg;
        h[u] = go * std::tanh(c[u]);
    }
    x_t.tape->add_units(4.0 * (dx + dh) * dh);

    Tape& tape = *x_t.tape;
    int ix = x_t.id, ih = h_prev.id, ic = c_prev.id, iwx = Wx.id, iwh = Wh.id, ib = b.id;

    // Emit c first so the h node can reference it by id.
    Var cvar = tape.emit(std::move(c), nullptr);
    int icnew = cvar.id;
    Var hvar = tape.emit(std::move(h),
                         [ix, ih, ic, iwx, iwh, ib, icnew, dx, dh](Tape& t, int self) {
        const Tensor& gates = t.saved(self, 0);
        const Tensor& cnew = t.value(icnew);
        const Tensor& cold = t.value(ic);
        const Tensor& gh = t.grad_of(self);
        // Combined sweep: d(loss)/dc_new may come both from the c output
        // node (chained steps) and through h = o * tanh(c).
        Tensor dc({1, dh});
        dc.array().setZero();
        // The c node has no back fn; its accumulated grad is pulled here.
        dc.array() += t.grad_slot(icnew).array();
        Tensor dz({1, 4 * dh});
        for (int u = 0; u < dh; ++u) {
            double gi = gates[u], gf = gates[dh + u], gg = gates[2 * dh + u], go = gates[3 * dh + u];
            double tc = std::tanh(cnew[u]);
            double dcu = dc[u] + gh[u] * go * (1.0 - tc * tc);
            dz[u] = dcu * gg * gi * (1.0 - gi);
            dz[dh + u] = dcu * cold[u] * gf * (1.0 - gf);
            dz[2 * dh + u] = dcu * gi * (1.0 - gg * gg);
            dz[3 * dh + u] = gh[u] * tc * go * (1.0 - go);
            t.grad_slot(ic)[u] += dcu * gf;
        }
        auto DZ = dz.mat();
        t.grad_slot(ix).mat(1, dx).noalias() += DZ * t.value(iwx).mat(dx, 4 * dh).transpose();
        t.grad_slot(ih).mat(1, dh).noalias() += DZ * t.value(iwh).mat(dh, 4 * dh).transpose();
        t.grad_slot(iwx).mat(dx, 4 * dh).noalias() += t.value(ix).mat(1, dx).transpose() * DZ;
        t.grad_slot(iwh).mat(dh, 4 * dh).noalias() += t.value(ih).mat(1, dh).transpose() * DZ;
        t.grad_slot(ib).array() += dz.array();
        t.add_units(8.0 * (dx + dh) * dh);
    });
    tape.save(hvar.id, std::move(gates));
    return {hvar, cvar};
}

// --- attention ----------------------------------------------------------------

Var scaled_dot_attention(Var Q, Var K, Var V, bool causal, int n_heads,
                         double dropout, bool training, uint64_t dropout_seed) {
    const Tensor& qv = Q.value();
    const Tensor& kv = K.value();
    const Tensor& vv = V.value();
    if (qv.ndim() != 2) throw ShapeError("attention expects 2-d inputs");
    check_same_shape(qv, kv, "attention q/k");
    check_same_shape(qv, vv, "attention q/v");
    int T = qv.dim(0), d = qv.dim(1);
    if (n_heads < 1 || d % n_heads != 0) throw ShapeError("attention: d must divide into heads");
    int hd = d / n_heads;
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    bool keep_probs = Q.tape->grad_enabled();
    bool use_dropout = training && dropout > 0.0;

    Tensor out({T, d});
    Tensor probs;     // (heads, T, T) softmax weights, pre-dropout
    Tensor dropmask;  // multiplier applied after softmax (0 or 1/(1-rate))
    if (keep_probs) probs = Tensor::zeros({n_heads, T, T});
    if (keep_probs && use_dropout) dropmask = Tensor::full({n_heads, T, T}, 1.0);
    Rng drop_rng(dropout_seed);
    double keep_scale = use_dropout ? 1.0 / (1.0 - dropout) : 1.0;

    std::vector<double> srow(static_cast<size_t>(T));
    for (int head = 0; head < n_heads; ++head) {
        int c0 = head * hd;
        for (int i = 0; i < T; ++i) {
            int jmax = causal ? i : T - 1;
            double m = -1e300;
            for (int j = 0; j <= jmax; ++j) {
                double s = 0;
                const double* qr = qv.data() + static_cast<Eigen::Index>(i) * d + c0;
                const double* kr = kv.data() + static_cast<Eigen::Index>(j) * d + c0;
                for (int u = 0; u < hd; ++u) s += qr[u] * kr[u];
                s *= inv_sqrt;
                srow[static_cast<size_t>(j)] = s;
                m = std::max(m, s);
            }
            double z = 0;
            for (int j = 0; j <= jmax; ++j) {
                double e = std::exp(srow[static_cast<size_t>(j)] - m);
                srow[static_cast<size_t>(j)] = e;
                z += e;
            }
            double* orow = out.data() + static_cast<Eigen::Index>(i) * d + c0;
            for (int j = 0; j <= jmax; ++j) {
                double p = srow[static_cast<size_t>(j)] / z;
                if (keep_probs) probs.at(head, i, j) = p;
                if (use_dropout) {
                    double mscale = (drop_rng.uniform() < dropout) ? 0.0 : keep_scale;
                    if (keep_probs) dropmask.at(head, i, j) = mscale;
                    p *= mscale;
                }
                const double* vr = vv.data() + static_cast<Eigen::Index>(j) * d + c0;
                for (int u = 0; u < hd; ++u) orow[u] += p * vr[u];
            }
            Q.tape->add_units(2.0 * (jmax + 1) * hd);
        }
    }

    int iq = Q.id, ik = K.id, iv = V.id;
    Var res = Q.tape->emit(std::move(out), [iq, ik, iv, T, d, n_heads, hd, inv_sqrt, causal,
                                            use_dropout](Tape& t, int self) {
        const Tensor& P = t.saved(self, 0);
        const Tensor* M = use_dropout ? &t.saved(self, 1) : nullptr;
        const Tensor& gv = t.grad_of(self);
        const Tensor& qv = t.value(iq);
        const Tensor& kv = t.value(ik);
        const Tensor& vv = t.value(iv);
        Tensor& gq = t.grad_slot(iq);
        Tensor& gk = t.grad_slot(ik);
        Tensor& gvv = t.grad_slot(iv);
        std::vector<double> dp(static_cast<size_t>(T)), ds(static_cast<size_t>(T));
        for (int head = 0; head < n_heads; ++head) {
            int c0 = head * hd;
            for (int i = 0; i < T; ++i) {
                int jmax = causal ? i : T - 1;
                const double* grow = gv.data() + static_cast<Eigen::Index>(i) * d + c0;
                double dot = 0;
                for (int j = 0; j <= jmax; ++j) {
                    double p = P.at(head, i, j);
                    double mscale = M ? M->at(head, i, j) : 1.0;
                    const double* vr = vv.data() + static_cast<Eigen::Index>(j) * d + c0;
                    double* gvr = gvv.data() + static_cast<Eigen::Index>(j) * d + c0;
                    double d_pdrop = 0;
                    for (int u = 0; u < hd; ++u) {
                        d_pdrop += grow[u] * vr[u];
                        gvr[u] += p * mscale * grow[u];
                    }
                    double d_p = d_pdrop * mscale;
                    dp[static_cast<size_t>(j)] = d_p;
                    dot += d_p * p;
                }
                for (int j = 0; j <= jmax; ++j) {
                    double p = P.at(head, i, j);
                    ds[static_cast<size_t>(j)] = p * (dp[static_cast<size_t>(j)] - dot) * inv_sqrt;
                }
                double* gqr = gq.data() + static_cast<Eigen::Index>(i) * d + c0;
                const double* qr = qv.data() + static_cast<Eigen::Index>(i) * d + c0;
                for (int j = 0; j <= jmax; ++j) {
                    double s = ds[static_cast<size_t>(j)];
                    if (s == 0.0) continue;
                    const double* kr = kv.data() + static_cast<Eigen::Index>(j) * d + c0;
                    double* gkr = gk.data() + static_cast<Eigen::Index>(j) * d + c0;
                    for (int u = 0; u < hd; ++u) {
                        gqr[u] += s * kr[u];
                        gkr[u] += s * qr[u];
                    }
                }
                t.add_units(6.0 * (jmax + 1) * hd);
            }
        }
    });
    if (keep_probs) {
        Q.tape->save(res.id, std::move(probs));
        if (use_dropout) Q.tape->save(res.id, std::move(dropmask));
    }
    return res;
}

// --- shape plumbing -------------------------------------------------------------

Var sliding_window_embed(Var x, int L) {
    if (L < 1) throw ShapeError("window length must be >= 1");
    const Tensor& xv = x.value();
    if (xv.ndim() != 2) throw ShapeError("sliding_window_embed expects (T,d)");
    int T = xv.dim(0), d = xv.dim(1);
    Tensor out({T, L * d});
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < L; ++j) {
            int src = t - L + 1 + j;
            if (src < 0) continue;
            std::copy_n(xv.data() + static_cast<Eigen::Index>(src) * d, d,
                        out.data() + (static_cast<Eigen::Index>(t) * L + j) * d);
        }
    x.tape->add_units(static_cast<double>(T) * L * d);
    int ix = x.id;
    return x.tape->emit(std::move(out), [ix, T, d, L](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        Tensor& gx = t.grad_slot(ix);
        for (int tt = 0; tt < T; ++tt)
            for (int j = 0; j < L; ++j) {
                int src = tt - L + 1 + j;
                if (src < 0) continue;
                const double* gr = g.data() + (static_cast<Eigen::Index>(tt) * L + j) * d;
                double* gxr = gx.data() + static_cast<Eigen::Index>(src) * d;
                for (int u = 0; u < d; ++u) gxr[u] += gr[u];
            }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty");
    int m = parts[0].value().dim(0);
    int total = 0;
    for (const Var& p : parts) {
        if (p.value().ndim() != 2 || p.value().dim(0) != m)
            throw ShapeError("concat_cols: row mismatch");
        total += p.value().dim(1);
    }
    Tensor out({m, total});
    std::vector<int> ids, widths, offsets;
    int off = 0;
    for (const Var& p : parts) {
        int w = p.value().dim(1);
        for (int i = 0; i < m; ++i)
            std::copy_n(p.value().data() + static_cast<Eigen::Index>(i) * w, w,
                        out.data() + static_cast<Eigen::Index>(i) * total + off);
        ids.push_back(p.id);
        widths.push_back(w);
        offsets.push_back(off);
        off += w;
    }
    return parts[0].tape->emit(std::move(out), [ids, widths, offsets, m, total](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        for (size_t p = 0; p < ids.size(); ++p) {
            Tensor& gp = t.grad_slot(ids[p]);
            int w = widths[p], o = offsets[p];
            for (int i = 0; i < m; ++i) {
                const double* gr = g.data() + static_cast<Eigen::Index>(i) * total + o;
                double* dst = gp.data() + static_cast<Eigen::Index>(i) * w;
                for (int u = 0; u < w; ++u) dst[u] += gr[u];
            }
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty");
    int cols = parts[0].value().dim(1);
    int rows = 0;
    for (const Var& p : parts) {
        if (p.value().ndim() != 2 || p.value().dim(1) != cols)
            throw ShapeError("concat_rows: column mismatch");
        rows += p.value().dim(0);
    }
    Tensor out({rows, cols});
    std::vector<int> ids, counts;
    int r = 0;
    for (const Var& p : parts) {
        int pr = p.value().dim(0);
        std::copy_n(p.value().data(), static_cast<Eigen::Index>(pr) * cols,
                    out.data() + static_cast<Eigen::Index>(r) * cols);
        ids.push_back(p.id);
        counts.push_back(pr);
        r += pr;
    }
    return parts[0].tape->emit(std::move(out), [ids, counts, cols](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        Eigen::Index r = 0;
        for (size_t p = 0; p < ids.size(); ++p) {
            Tensor& gp = t.grad_slot(ids[p]);
            Eigen::Index n = static_cast<Eigen::Index>(counts[p]) * cols;
            ConstVecMap src(g.data() + r * cols, n);
            VecMap(gp.data(), n) += src;
            r += counts[p];
        }
    });
}

Var slice_rows(Var x, int row0, int row1) {
    const Tensor& xv = x.value();
    if (xv.ndim() != 2) throw ShapeError("slice_rows expects 2-d");
    int T = xv.dim(0), d = xv.dim(1);
    if (row0 < 0 || row1 > T || row0 >= row1) throw ShapeError("slice_rows: bad range");
    int m = row1 - row0;
    Tensor out({m, d});
    std::copy_n(xv.data() + static_cast<Eigen::Index>(row0) * d,
                static_cast<Eigen::Index>(m) * d, out.data());
    int ix = x.id;
    return x.tape->emit(std::move(out), [ix, row0, m, d](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        Tensor& gx = t.grad_slot(ix);
        VecMap(gx.data() + static_cast<Eigen::Index>(row0) * d, static_cast<Eigen::Index>(m) * d) +=
            ConstVecMap(g.data(), static_cast<Eigen::Index>(m) * d);
    });
}

Var reshape(Var x, std::vector<int> shape) {
    Tensor out = x.value().reshaped(shape);
    int ix = x.id;
    return x.tape->emit(std::move(out), [ix](Tape& t, int self) {
        t.grad_slot(ix).array() += t.grad_of(self).array();
    });
}

Var sum(Var x) {
    Tensor out = Tensor::scalar(x.value().array().sum());
    x.tape->add_units(static_cast<double>(x.value().size()));
    int ix = x.id;
    return x.tape->emit(std::move(out), [ix](Tape& t, int self) {
        t.grad_slot(ix).array() += t.grad_of(self)[0];
    });
}

Var masked_mean(Var x, const Tensor& mask) {
    const Tensor& xv = x.value();
    Eigen::Index repeat = 1;
    if (!mask.same_shape(xv)) {
        if (mask.ndim() >= xv.ndim()) throw ShapeError("masked_mean: mask shape");
        for (int a = 0; a < mask.ndim(); ++a)
            if (mask.dim(a) != xv.dim(a)) throw ShapeError("masked_mean: mask leading axes");
        for (int a = mask.ndim(); a < xv.ndim(); ++a) repeat *= xv.dim(a);
    }
    double count = mask.array().sum() * static_cast<double>(repeat);
    if (count <= 0) throw EmptyLossError("masked_mean: mask selects nothing");

    double acc = 0;
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        if (mask[i] == 0.0) continue;
        const double* xp = xv.data() + i * repeat;
        for (Eigen::Index r = 0; r < repeat; ++r) acc += xp[r];
    }
    x.tape->add_units(static_cast<double>(xv.size()));
    Tensor out = Tensor::scalar(acc / count);

    int ix = x.id;
    Tape& tape = *x.tape;
    Var res = tape.emit(std::move(out), [ix, repeat, count](Tape& t, int self) {
        double g = t.grad_of(self)[0] / count;
        const Tensor& m = t.saved(self, 0);
        Tensor& gx = t.grad_slot(ix);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            if (m[i] == 0.0) continue;
            double* gp = gx.data() + i * repeat;
            for (Eigen::Index r = 0; r < repeat; ++r) gp[r] += g;
        }
    });
    tape.save(res.id, mask);
    return res;
}

Var pinball_elem(const Tensor& targets, Var yhat, const std::vector<double>& quantiles) {
    const Tensor& pv = yhat.value();
    int Q = static_cast<int>(quantiles.size());
    if (pv.ndim() < 2 || pv.dim(pv.ndim() - 1) != Q)
        throw ShapeError("pinball_elem: trailing axis must equal quantile count");
    if (pv.size() != targets.size() * Q) throw ShapeError("pinball_elem: target shape");

    Tensor out = Tensor::uninit(pv.shape());
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
        double y = targets[i];
        for (int q = 0; q < Q; ++q) {
            double diff = y - pv[i * Q + q];
            out[i * Q + q] = diff >= 0 ? quantiles[static_cast<size_t>(q)] * diff
                                       : (quantiles[static_cast<size_t>(q)] - 1.0) * diff;
        }
    }
    yhat.tape->add_units(static_cast<double>(pv.size()));

    int ip = yhat.id;
    std::vector<double> qs = quantiles;
    Tape& tape = *yhat.tape;
    Var res = tape.emit(std::move(out), [ip, qs, Q](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& y = t.saved(self, 0);
        const Tensor& pred = t.value(ip);
        Tensor& gp = t.grad_slot(ip);
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            for (int q = 0; q < Q; ++q) {
                double diff = y[i] - pred[i * Q + q];
                double d = diff > 0 ? -qs[static_cast<size_t>(q)]
                                    : (diff < 0 ? 1.0 - qs[static_cast<size_t>(q)] : 0.0);
                gp[i * Q + q] += g[i * Q + q] * d;
            }
        }
    });
    tape.save(res.id, targets);
    return res;
}

// --- finite differences ----------------------------------------------------------

GradCheckResult grad_check(const std::function<Var(ParamStore&, Tape&)>& f, ParamStore& store,
                           double epsilon, int max_coords, uint64_t seed) {
    store.zero_grad();
    {
        Tape tape;
        Var loss = f(store, tape);
        tape.backward(loss);
    }

    auto eval = [&]() {
        Tape tape(false);
        return f(store, tape).value()[0];
    };
    const double f0 = eval();

    // Candidate coordinates: everything when the model is small, otherwise a
    // distinct uniform sample with slack for kink rejections.
    Eigen::Index total = store.param_count();
    std::vector<std::pair<size_t, Eigen::Index>> candidates;
    Rng rng(seed);
    if (total <= static_cast<Eigen::Index>(max_coords) * 5 / 4) {
        for (size_t pi = 0; pi < store.names().size(); ++pi) {
            Eigen::Index n = store.value(store.names()[pi]).size();
            for (Eigen::Index i = 0; i < n; ++i) candidates.emplace_back(pi, i);
        }
    } else {
        std::vector<Eigen::Index> offsets;
        Eigen::Index acc = 0;
        for (const std::string& name : store.names()) {
            offsets.push_back(acc);
            acc += store.value(name).size();
        }
        std::set<Eigen::Index> seen;
        Eigen::Index want = max_coords + max_coords / 4 + 16;
        while (static_cast<Eigen::Index>(seen.size()) < std::min(want, total)) {
            Eigen::Index flat = static_cast<Eigen::Index>(rng.raw() % static_cast<uint64_t>(total));
            if (!seen.insert(flat).second) continue;
            size_t pi = static_cast<size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) -
                                            offsets.begin()) - 1;
            candidates.emplace_back(pi, flat - offsets[pi]);
        }
    }

    GradCheckResult res;
    for (auto [pi, i] : candidates) {
        if (res.coords_checked >= max_coords) break;
        Tensor& p = store.value(store.names()[pi]);
        const Tensor& g = store.grad(store.names()[pi]);
        double orig = p[i];
        p[i] = orig + epsilon;
        double up = eval();
        p[i] = orig - epsilon;
        double down = eval();
        p[i] = orig;
        double numeric = (up - down) / (2.0 * epsilon);
        double scale = std::max({1.0, std::abs(numeric), std::abs(g[i])});
        // One-sided derivatives disagreeing beyond rounding means the
        // interval straddles a kink (relu or pinball); central differences
        // are meaningless there, so the coordinate is excluded.
        double asym = std::abs((up - f0) / epsilon - (f0 - down) / epsilon);
        if (asym > 1e-4 * scale) {
            ++res.coords_skipped;
            continue;
        }
        double err = std::abs(g[i] - numeric) / std::max(1.0, std::abs(numeric));
        res.max_rel_error = std::max(res.max_rel_error, err);
        ++res.coords_checked;
    }
    return res;
}

}  // namespace forkcast
