#include "sidrec/network.hpp"

#include "sidrec/error.hpp"
#include "sidrec/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sidrec {

namespace {

constexpr double norm_eps = 1e-5;

// ---------------------------------------------------------------------------
// Primitive layers. Backward functions accumulate parameter gradients.
// ---------------------------------------------------------------------------

void add_row_bias(matrix& y, const matrix& b) {
    for (std::size_t i = 0; i < y.rows(); ++i) {
        auto r = y.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += b(0, j);
    }
}

void accumulate_column_sums(const matrix& dy, matrix& db) {
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        auto r = dy.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) db(0, j) += r[j];
    }
}

void linear(const matrix& x, const matrix& w, const matrix& b, matrix& y) {
    kernels::gemm_nn(x, w, y);
    add_row_bias(y, b);
}

// dx = dy W^T (overwritten, or added when accumulate_dx).
void linear_backward(const matrix& x, const matrix& w, const matrix& dy, matrix& dw, matrix& db, matrix& dx,
                     bool accumulate_dx) {
    kernels::gemm_tn(x, dy, dw, true);
    accumulate_column_sums(dy, db);
    kernels::gemm_nt(dy, w, dx, accumulate_dx);
}

struct norm_cache {
    matrix xhat;
    std::vector<double> inv_std;
};

void norm_forward(const matrix& x, const layer_norm_weights& w, matrix& y, norm_cache& c) {
    const std::size_t d = x.cols();
    y.resize(x.rows(), d);
    c.xhat.resize(x.rows(), d);
    c.inv_std.assign(x.rows(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        double mean = 0.0;
        for (double v : r) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + norm_eps);
        c.inv_std[i] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (r[j] - mean) * inv;
            c.xhat(i, j) = xh;
            y(i, j) = xh * w.gain(0, j) + w.bias(0, j);
        }
    }
}

// dx += d(norm)/dx applied to dy.
void norm_backward(const matrix& dy, const layer_norm_weights& w, const norm_cache& c, layer_norm_weights& dw,
                   matrix& dx) {
    const std::size_t d = dy.cols();
    std::vector<double> dxhat(d);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        double mean1 = 0.0, mean2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dw.gain(0, j) += dy(i, j) * c.xhat(i, j);
            dw.bias(0, j) += dy(i, j);
            dxhat[j] = dy(i, j) * w.gain(0, j);
            mean1 += dxhat[j];
            mean2 += dxhat[j] * c.xhat(i, j);
        }
        mean1 /= static_cast<double>(d);
        mean2 /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j)
            dx(i, j) += c.inv_std[i] * (dxhat[j] - mean1 - c.xhat(i, j) * mean2);
    }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

struct dropout_cache {
    matrix scale;
    bool active = false;
};

void dropout_forward(matrix& x, const dropout_source& src, dropout_cache& c) {
    c.active = src.active();
    if (!c.active) return;
    c.scale.resize(x.rows(), x.cols());
    const double keep = 1.0 / (1.0 - src.rate);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = src.generator->uniform() < src.rate ? 0.0 : keep;
        c.scale.data()[i] = s;
        x.data()[i] *= s;
    }
}

void dropout_backward(matrix& dx, const dropout_cache& c) {
    if (!c.active) return;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] *= c.scale.data()[i];
}

// Multi-head scaled dot-product attention on already projected q, k, v.
// Keys with key_valid == 0 receive exactly zero weight.
void attention_core(const matrix& q, const matrix& k, const matrix& v, const std::vector<char>* key_valid,
                    std::size_t heads, matrix& ctx, std::vector<matrix>& probs) {
    const std::size_t tq = q.rows(), tk = k.rows(), d = q.cols(), hd = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    ctx.resize(tq, d);
    probs.assign(heads, matrix(tq, tk));
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * hd;
        matrix& p = probs[h];
        for (std::size_t i = 0; i < tq; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < tk; ++j) {
                if (key_valid && !(*key_valid)[j]) continue;
                double s = 0.0;
                for (std::size_t t = 0; t < hd; ++t) s += q(i, off + t) * k(j, off + t);
                p(i, j) = s * scale;
                mx = std::max(mx, p(i, j));
            }
            double z = 0.0;
            for (std::size_t j = 0; j < tk; ++j) {
                if (key_valid && !(*key_valid)[j]) {
                    p(i, j) = 0.0;
                    continue;
                }
                p(i, j) = std::exp(p(i, j) - mx);
                z += p(i, j);
            }
            for (std::size_t j = 0; j < tk; ++j) p(i, j) /= z;
            for (std::size_t j = 0; j < tk; ++j) {
                const double pij = p(i, j);
                if (pij == 0.0) continue;
                for (std::size_t t = 0; t < hd; ++t) ctx(i, off + t) += pij * v(j, off + t);
            }
        }
    }
}

void attention_core_backward(const matrix& dctx, const matrix& q, const matrix& k, const matrix& v,
                             const std::vector<matrix>& probs, std::size_t heads, matrix& dq, matrix& dk,
                             matrix& dv) {
    const std::size_t tq = q.rows(), tk = k.rows(), d = q.cols(), hd = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    dq.resize(tq, d);
    dk.resize(tk, d);
    dv.resize(tk, d);
    std::vector<double> dp(tk);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * hd;
        const matrix& p = probs[h];
        for (std::size_t i = 0; i < tq; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < tk; ++j) {
                double s = 0.0;
                for (std::size_t t = 0; t < hd; ++t) s += dctx(i, off + t) * v(j, off + t);
                dp[j] = s;
                dot += s * p(i, j);
                const double pij = p(i, j);
                if (pij != 0.0)
                    for (std::size_t t = 0; t < hd; ++t) dv(j, off + t) += pij * dctx(i, off + t);
            }
            for (std::size_t j = 0; j < tk; ++j) {
                const double ds = p(i, j) * (dp[j] - dot) * scale;
                if (ds == 0.0) continue;
                for (std::size_t t = 0; t < hd; ++t) {
                    dq(i, off + t) += ds * k(j, off + t);
                    dk(j, off + t) += ds * q(i, off + t);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Transformer blocks (pre-norm residual).
// ---------------------------------------------------------------------------

struct self_attention_cache {
    norm_cache norm;
    matrix normed, q, k, v, ctx;
    std::vector<matrix> probs;
    dropout_cache drop;
};

// x += dropout(SelfAttention(LN(x)))
void self_attention_forward(matrix& x, const layer_norm_weights& ln, const attention_weights& w,
                            const std::vector<char>* key_valid, std::size_t heads, const dropout_source& dsrc,
                            self_attention_cache& c) {
    norm_forward(x, ln, c.normed, c.norm);
    linear(c.normed, w.wq, w.bq, c.q);
    linear(c.normed, w.wk, w.bk, c.k);
    linear(c.normed, w.wv, w.bv, c.v);
    attention_core(c.q, c.k, c.v, key_valid, heads, c.ctx, c.probs);
    matrix out;
    linear(c.ctx, w.wo, w.bo, out);
    dropout_forward(out, dsrc, c.drop);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += out.data()[i];
}

// dx carries d(residual output); on return it holds d(residual input).
void self_attention_backward(matrix& dx, const layer_norm_weights& ln, const attention_weights& w,
                             layer_norm_weights& dln, attention_weights& dw, std::size_t heads,
                             const self_attention_cache& c) {
    matrix dout = dx;
    dropout_backward(dout, c.drop);
    matrix dctx, dq, dk, dv, dnormed;
    linear_backward(c.ctx, w.wo, dout, dw.wo, dw.bo, dctx, false);
    attention_core_backward(dctx, c.q, c.k, c.v, c.probs, heads, dq, dk, dv);
    linear_backward(c.normed, w.wq, dq, dw.wq, dw.bq, dnormed, false);
    linear_backward(c.normed, w.wk, dk, dw.wk, dw.bk, dnormed, true);
    linear_backward(c.normed, w.wv, dv, dw.wv, dw.bv, dnormed, true);
    norm_backward(dnormed, ln, c.norm, dln, dx);
}

struct cross_attention_cache {
    norm_cache norm;
    matrix normed, q, ctx;
    std::vector<matrix> probs;
    dropout_cache drop;
};

void cross_attention_forward(matrix& x, const layer_norm_weights& ln, const attention_weights& w, const matrix& keys,
                             const matrix& values, const std::vector<char>& key_valid, std::size_t heads,
                             const dropout_source& dsrc, cross_attention_cache& c) {
    norm_forward(x, ln, c.normed, c.norm);
    linear(c.normed, w.wq, w.bq, c.q);
    attention_core(c.q, keys, values, &key_valid, heads, c.ctx, c.probs);
    matrix out;
    linear(c.ctx, w.wo, w.bo, out);
    dropout_forward(out, dsrc, c.drop);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += out.data()[i];
}

// Also accumulates gradients w.r.t. the cached keys and values.
void cross_attention_backward(matrix& dx, const layer_norm_weights& ln, const attention_weights& w,
                              const matrix& keys, const matrix& values, layer_norm_weights& dln,
                              attention_weights& dw, std::size_t heads, const cross_attention_cache& c,
                              matrix& dkeys, matrix& dvalues) {
    matrix dout = dx;
    dropout_backward(dout, c.drop);
    matrix dctx, dq, dk, dv, dnormed;
    linear_backward(c.ctx, w.wo, dout, dw.wo, dw.bo, dctx, false);
    attention_core_backward(dctx, c.q, keys, values, c.probs, heads, dq, dk, dv);
    for (std::size_t i = 0; i < dk.size(); ++i) {
        dkeys.data()[i] += dk.data()[i];
        dvalues.data()[i] += dv.data()[i];
    }
    linear_backward(c.normed, w.wq, dq, dw.wq, dw.bq, dnormed, false);
    norm_backward(dnormed, ln, c.norm, dln, dx);
}

struct feed_forward_cache {
    norm_cache norm;
    matrix normed, pre, act;
    dropout_cache drop;
};

void feed_forward_forward(matrix& x, const layer_norm_weights& ln, const feed_forward_weights& w,
                          const dropout_source& dsrc, feed_forward_cache& c) {
    norm_forward(x, ln, c.normed, c.norm);
    linear(c.normed, w.w1, w.b1, c.pre);
    c.act = c.pre;
    for (auto& v : c.act.values()) v = gelu(v);
    matrix out;
    linear(c.act, w.w2, w.b2, out);
    dropout_forward(out, dsrc, c.drop);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += out.data()[i];
}

void feed_forward_backward(matrix& dx, const layer_norm_weights& ln, const feed_forward_weights& w,
                           layer_norm_weights& dln, feed_forward_weights& dw, const feed_forward_cache& c) {
    matrix dout = dx;
    dropout_backward(dout, c.drop);
    matrix dact, dnormed;
    linear_backward(c.act, w.w2, dout, dw.w2, dw.b2, dact, false);
    for (std::size_t i = 0; i < dact.size(); ++i) dact.data()[i] *= gelu_grad(c.pre.data()[i]);
    linear_backward(c.normed, w.w1, dact, dw.w1, dw.b1, dnormed, false);
    norm_backward(dnormed, ln, c.norm, dln, dx);
}

struct encoder_layer_cache {
    self_attention_cache attn;
    feed_forward_cache ffn;
};

struct decoder_layer_cache {
    self_attention_cache self;
    cross_attention_cache cross;
    feed_forward_cache ffn;
};

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

struct encoder_cache {
    std::vector<semantic_id> context;
    std::size_t first_item_slot = 0;
    matrix item_concat; // c x (n * d_e)
    dropout_cache input_drop;
    std::vector<encoder_layer_cache> layers;
    norm_cache final_norm;
};

void check_sid(const semantic_id& sid, const model_config& config) {
    if (sid.size() != config.digits)
        throw data_error("semantic id has " + std::to_string(sid.size()) + " digits, model expects " +
                         std::to_string(config.digits));
    for (auto d : sid.digits)
        if (d >= config.codebook_size)
            throw data_error("semantic id digit " + std::to_string(d) + " outside [0, " +
                             std::to_string(config.codebook_size) + ")");
}

void cross_projections(encoder_state& state, const model_params& p) {
    state.cross_keys.clear();
    state.cross_values.clear();
    for (const auto& layer : p.decoder) {
        matrix k, v;
        linear(state.hidden, layer.cross_attention.wk, layer.cross_attention.bk, k);
        linear(state.hidden, layer.cross_attention.wv, layer.cross_attention.bv, v);
        state.cross_keys.push_back(std::move(k));
        state.cross_values.push_back(std::move(v));
    }
}

encoder_state encoder_forward(std::span<const semantic_id> context, const model_params& p, const model_config& cfg,
                              const dropout_source& dsrc, encoder_cache& c) {
    const std::size_t len = cfg.input_length, d = cfg.d_model, de = cfg.sid_embedding_dim();
    if (context.size() > len)
        throw data_error("context of " + std::to_string(context.size()) + " items exceeds input length " +
                         std::to_string(len));
    for (const auto& sid : context) check_sid(sid, cfg);

    c.context.assign(context.begin(), context.end());
    c.first_item_slot = len - context.size();
    c.item_concat.resize(context.size(), cfg.digits * de);
    for (std::size_t i = 0; i < context.size(); ++i)
        for (std::size_t k = 0; k < cfg.digits; ++k) {
            auto e = p.sid_embeddings[k].row(context[i][k]);
            std::copy(e.begin(), e.end(), c.item_concat.row(i).begin() + static_cast<std::ptrdiff_t>(k * de));
        }
    matrix projected;
    linear(c.item_concat, p.item_projection, p.item_projection_bias, projected);

    encoder_state state;
    state.key_valid.assign(len, 0);
    matrix x(len, d);
    for (std::size_t s = 0; s < len; ++s) {
        auto row = x.row(s);
        if (s < c.first_item_slot) {
            for (std::size_t j = 0; j < d; ++j) row[j] = p.pad_embedding(0, j) + p.positions(s, j);
        } else {
            state.key_valid[s] = 1;
            auto src = projected.row(s - c.first_item_slot);
            for (std::size_t j = 0; j < d; ++j) row[j] = src[j] + p.positions(s, j);
        }
    }
    if (context.empty()) state.key_valid[len - 1] = 1;
    dropout_forward(x, dsrc, c.input_drop);

    c.layers.resize(p.encoder.size());
    for (std::size_t l = 0; l < p.encoder.size(); ++l) {
        const auto& w = p.encoder[l];
        self_attention_forward(x, w.norm1, w.self_attention, &state.key_valid, cfg.heads, dsrc, c.layers[l].attn);
        feed_forward_forward(x, w.norm2, w.ffn, dsrc, c.layers[l].ffn);
    }
    norm_forward(x, p.encoder_norm, state.hidden, c.final_norm);
    cross_projections(state, p);
    return state;
}

// dhidden: gradient w.r.t. encoder_state.hidden, excluding the cross projections.
void encoder_backward(matrix dhidden, const std::vector<matrix>& dkeys, const std::vector<matrix>& dvalues,
                      const encoder_state& state, const model_params& p, const model_config& cfg,
                      const encoder_cache& c, model_params& g) {
    const std::size_t len = cfg.input_length, d = cfg.d_model, de = cfg.sid_embedding_dim();
    for (std::size_t l = 0; l < p.decoder.size(); ++l) {
        const auto& w = p.decoder[l].cross_attention;
        auto& dw = g.decoder[l].cross_attention;
        linear_backward(state.hidden, w.wk, dkeys[l], dw.wk, dw.bk, dhidden, true);
        linear_backward(state.hidden, w.wv, dvalues[l], dw.wv, dw.bv, dhidden, true);
    }
    matrix dx(len, d);
    norm_backward(dhidden, p.encoder_norm, c.final_norm, g.encoder_norm, dx);
    for (std::size_t l = p.encoder.size(); l-- > 0;) {
        const auto& w = p.encoder[l];
        auto& dw = g.encoder[l];
        feed_forward_backward(dx, w.norm2, w.ffn, dw.norm2, dw.ffn, c.layers[l].ffn);
        self_attention_backward(dx, w.norm1, w.self_attention, dw.norm1, dw.self_attention, cfg.heads,
                                c.layers[l].attn);
    }
    dropout_backward(dx, c.input_drop);

    matrix dprojected(c.context.size(), d);
    for (std::size_t s = 0; s < len; ++s) {
        auto row = dx.row(s);
        for (std::size_t j = 0; j < d; ++j) g.positions(s, j) += row[j];
        if (s < c.first_item_slot) {
            for (std::size_t j = 0; j < d; ++j) g.pad_embedding(0, j) += row[j];
        } else {
            std::copy(row.begin(), row.end(), dprojected.row(s - c.first_item_slot).begin());
        }
    }
    if (c.context.empty()) return;
    matrix dconcat;
    linear_backward(c.item_concat, p.item_projection, dprojected, g.item_projection, g.item_projection_bias, dconcat,
                    false);
    for (std::size_t i = 0; i < c.context.size(); ++i)
        for (std::size_t k = 0; k < cfg.digits; ++k) {
            auto dst = g.sid_embeddings[k].row(c.context[i][k]);
            for (std::size_t t = 0; t < de; ++t) dst[t] += dconcat(i, k * de + t);
        }
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

struct decoder_cache {
    slot_values slots;
    matrix slot_embed; // n x d_e, the embedding fed to each slot
    dropout_cache input_drop;
    std::vector<decoder_layer_cache> layers;
    norm_cache final_norm;
    matrix final_hidden; // n x d
};

void check_slots(const slot_values& slots, const model_config& cfg) {
    if (slots.size() != cfg.digits)
        throw data_error("decoder input has " + std::to_string(slots.size()) + " slots, model expects " +
                         std::to_string(cfg.digits));
    for (auto v : slots)
        if (v != mask_slot && (v < 0 || static_cast<std::size_t>(v) >= cfg.codebook_size))
            throw data_error("decoder slot value " + std::to_string(v) + " out of range");
}

void check_state(const encoder_state& state, const model_params& p, const model_config& cfg) {
    if (state.hidden.rows() != cfg.input_length || state.hidden.cols() != cfg.d_model ||
        state.key_valid.size() != cfg.input_length || state.cross_keys.size() != p.decoder.size() ||
        state.cross_values.size() != p.decoder.size())
        throw data_error("encoder state does not match the model shape");
}

matrix decoder_forward(const slot_values& slots, const encoder_state& state, const std::vector<matrix>& keys,
                       const std::vector<matrix>& values, const model_params& p, const model_config& cfg,
                       const dropout_source& dsrc, decoder_cache& c) {
    check_slots(slots, cfg);
    const std::size_t n = cfg.digits, d = cfg.d_model, de = cfg.sid_embedding_dim();
    c.slots = slots;
    c.slot_embed.resize(n, de);
    matrix x(n, d);
    for (std::size_t k = 0; k < n; ++k) {
        auto e = slots[k] == mask_slot ? p.mask_embedding.row(0)
                                       : p.sid_embeddings[k].row(static_cast<std::size_t>(slots[k]));
        std::copy(e.begin(), e.end(), c.slot_embed.row(k).begin());
        // Slot k reuses the k-th row block of the item projection.
        for (std::size_t j = 0; j < d; ++j) {
            double s = p.slot_positions(k, j);
            for (std::size_t t = 0; t < de; ++t) s += e[t] * p.item_projection(k * de + t, j);
            x(k, j) = s;
        }
    }
    dropout_forward(x, dsrc, c.input_drop);

    c.layers.resize(p.decoder.size());
    for (std::size_t l = 0; l < p.decoder.size(); ++l) {
        const auto& w = p.decoder[l];
        self_attention_forward(x, w.norm1, w.self_attention, nullptr, cfg.heads, dsrc, c.layers[l].self);
        cross_attention_forward(x, w.norm2, w.cross_attention, keys[l], values[l], state.key_valid, cfg.heads, dsrc,
                                c.layers[l].cross);
        feed_forward_forward(x, w.norm3, w.ffn, dsrc, c.layers[l].ffn);
    }
    norm_forward(x, p.decoder_norm, c.final_hidden, c.final_norm);

    matrix logits(n, cfg.codebook_size);
    for (std::size_t k = 0; k < n; ++k) {
        const matrix& head = p.output_heads[k];
        for (std::size_t m = 0; m < cfg.codebook_size; ++m) {
            double s = p.output_head_biases[k](0, m);
            for (std::size_t j = 0; j < d; ++j) s += c.final_hidden(k, j) * head(j, m);
            logits(k, m) = s;
        }
    }
    return logits;
}

void decoder_backward(const matrix& dlogits, const encoder_state& state, const std::vector<matrix>& keys,
                      const std::vector<matrix>& values, const model_params& p, const model_config& cfg,
                      const decoder_cache& c, model_params& g, std::vector<matrix>& dkeys,
                      std::vector<matrix>& dvalues) {
    (void)state;
    const std::size_t n = cfg.digits, d = cfg.d_model, de = cfg.sid_embedding_dim();
    matrix dfinal(n, d);
    for (std::size_t k = 0; k < n; ++k) {
        const matrix& head = p.output_heads[k];
        matrix& dhead = g.output_heads[k];
        for (std::size_t m = 0; m < cfg.codebook_size; ++m) {
            const double dl = dlogits(k, m);
            if (dl == 0.0) continue;
            g.output_head_biases[k](0, m) += dl;
            for (std::size_t j = 0; j < d; ++j) {
                dhead(j, m) += c.final_hidden(k, j) * dl;
                dfinal(k, j) += head(j, m) * dl;
            }
        }
    }
    matrix dx(n, d);
    norm_backward(dfinal, p.decoder_norm, c.final_norm, g.decoder_norm, dx);
    for (std::size_t l = p.decoder.size(); l-- > 0;) {
        const auto& w = p.decoder[l];
        auto& dw = g.decoder[l];
        feed_forward_backward(dx, w.norm3, w.ffn, dw.norm3, dw.ffn, c.layers[l].ffn);
        cross_attention_backward(dx, w.norm2, w.cross_attention, keys[l], values[l], dw.norm2, dw.cross_attention,
                                 cfg.heads, c.layers[l].cross, dkeys[l], dvalues[l]);
        self_attention_backward(dx, w.norm1, w.self_attention, dw.norm1, dw.self_attention, cfg.heads,
                                c.layers[l].self);
    }
    dropout_backward(dx, c.input_drop);
    for (std::size_t k = 0; k < n; ++k) {
        auto e = c.slot_embed.row(k);
        auto dst = c.slots[k] == mask_slot ? g.mask_embedding.row(0)
                                           : g.sid_embeddings[k].row(static_cast<std::size_t>(c.slots[k]));
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = dx(k, j);
            g.slot_positions(k, j) += dv;
            for (std::size_t t = 0; t < de; ++t) {
                g.item_projection(k * de + t, j) += e[t] * dv;
                dst[t] += p.item_projection(k * de + t, j) * dv;
            }
        }
    }
}

digit_distributions softmax_rows(const matrix& logits) {
    digit_distributions out;
    out.probs.resize(logits.rows(), logits.cols());
    out.log_probs.resize(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto r = logits.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double z = 0.0;
        for (double v : r) z += std::exp(v - mx);
        const double log_z = mx + std::log(z);
        for (std::size_t j = 0; j < r.size(); ++j) {
            out.log_probs(i, j) = r[j] - log_z;
            out.probs(i, j) = std::exp(out.log_probs(i, j));
        }
    }
    return out;
}

} // namespace

encoder_state encode(std::span<const semantic_id> context, const model_params& params, const model_config& config) {
    encoder_cache cache;
    return encoder_forward(context, params, config, {}, cache);
}

digit_distributions decode_digits(const slot_values& slots, const encoder_state& state, const model_params& params,
                                  const model_config& config) {
    check_state(state, params, config);
    decoder_cache cache;
    return softmax_rows(
        decoder_forward(slots, state, state.cross_keys, state.cross_values, params, config, {}, cache));
}

digit_distributions decode_digits_uncached(const slot_values& slots, const encoder_state& state,
                                           const model_params& params, const model_config& config) {
    encoder_state fresh;
    fresh.hidden = state.hidden;
    fresh.key_valid = state.key_valid;
    cross_projections(fresh, params);
    return decode_digits(slots, fresh, params, config);
}

std::vector<double> smoothed_target(std::uint32_t label, std::size_t codebook_size, double alpha) {
    std::vector<double> q(codebook_size, alpha / static_cast<double>(codebook_size));
    q.at(label) += 1.0 - alpha;
    return q;
}

struct sample_graph::impl {
    const model_params& params;
    const model_config& config;
    dropout_source dropout;
    encoder_cache enc_cache;
    encoder_state state;
    std::vector<matrix> dkeys, dvalues;
    bool encoder_done = false;

    impl(std::span<const semantic_id> context, const model_params& p, const model_config& cfg,
         const dropout_source& d)
        : params(p), config(cfg), dropout(d) {
        state = encoder_forward(context, p, cfg, d, enc_cache);
        for (std::size_t l = 0; l < p.decoder.size(); ++l) {
            dkeys.emplace_back(cfg.input_length, cfg.d_model);
            dvalues.emplace_back(cfg.input_length, cfg.d_model);
        }
    }
};

sample_graph::sample_graph(std::span<const semantic_id> context, const model_params& params,
                           const model_config& config, const dropout_source& dropout)
    : impl_(std::make_unique<impl>(context, params, config, dropout)) {}

sample_graph::~sample_graph() = default;
sample_graph::sample_graph(sample_graph&&) noexcept = default;
sample_graph& sample_graph::operator=(sample_graph&&) noexcept = default;

const encoder_state& sample_graph::state() const { return impl_->state; }

double sample_graph::add_view(const semantic_id& target, const masked_view& view, double alpha, double weight,
                              model_params& grad) {
    const auto& cfg = impl_->config;
    check_sid(target, cfg);
    if (view.masked.empty()) throw compute_error("training view has an empty masked set");
    slot_values slots = slots_from(target);
    for (auto k : view.masked) {
        if (k >= cfg.digits) throw compute_error("masked index out of range");
        if (slots[k] == mask_slot) throw compute_error("masked index repeated in view");
        slots[k] = mask_slot;
    }

    decoder_cache cache;
    const matrix logits = decoder_forward(slots, impl_->state, impl_->state.cross_keys, impl_->state.cross_values,
                                          impl_->params, cfg, impl_->dropout, cache);
    const auto dist = softmax_rows(logits);
    const double inv_masked = 1.0 / static_cast<double>(view.masked.size());

    double loss = 0.0;
    matrix dlogits(cfg.digits, cfg.codebook_size);
    for (auto k : view.masked) {
        const auto q = smoothed_target(target[k], cfg.codebook_size, alpha);
        for (std::size_t m = 0; m < cfg.codebook_size; ++m) {
            loss -= q[m] * dist.log_probs(k, m) * inv_masked;
            dlogits(k, m) = weight * inv_masked * (dist.probs(k, m) - q[m]);
        }
    }
    decoder_backward(dlogits, impl_->state, impl_->state.cross_keys, impl_->state.cross_values, impl_->params, cfg,
                     cache, grad, impl_->dkeys, impl_->dvalues);
    return loss;
}

void sample_graph::backward_encoder(model_params& grad) {
    if (impl_->encoder_done) throw compute_error("backward_encoder called twice");
    impl_->encoder_done = true;
    encoder_backward(matrix(impl_->config.input_length, impl_->config.d_model), impl_->dkeys, impl_->dvalues,
                     impl_->state, impl_->params, impl_->config, impl_->enc_cache, grad);
}

loss_and_gradient loss_and_grad(std::span<const supervised_sample> batch, const model_params& params,
                                const model_config& config, double alpha, const dropout_source& dropout) {
    loss_and_gradient out{0.0, model_params::zeros(config)};
    if (batch.empty()) return out;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (const auto& sample : batch) {
        if (sample.views.empty()) throw compute_error("training sample has no views");
        const double inv_views = 1.0 / static_cast<double>(sample.views.size());
        sample_graph graph(sample.context, params, config, dropout);
        for (const auto& view : sample.views)
            out.loss += inv_batch * inv_views * graph.add_view(sample.target, view, alpha, inv_batch * inv_views,
                                                               out.gradient);
        graph.backward_encoder(out.gradient);
    }
    return out;
}

} // namespace sidrec
