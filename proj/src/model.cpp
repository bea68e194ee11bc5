#include "lsnt/model.hpp"

#include <cmath>

#include "lsnt/errors.hpp"

namespace lsnt {

void ModelConfig::validate() const {
    if (d < 1) throw ConfigError("d must be >= 1");
    if (d_h < 1) throw ConfigError("d_h must be >= 1");
    if (h < 1) throw ConfigError("h must be >= 1");
    if (d_h % h != 0) {
        throw ConfigError("h must divide d_h (got d_h=" + std::to_string(d_h) +
                          ", h=" + std::to_string(h) + ")");
    }
    if (T < 1) throw ConfigError("T must be >= 1");
    if (n_blocks < 1) throw ConfigError("n_blocks must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ConfigError("dropout_rate must be in [0, 1)");
    }
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Matrix positional_encoding(std::size_t T, std::size_t d_h) {
    Matrix p(T, d_h);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < d_h; j += 2) {
            const double denom = std::pow(10000.0, static_cast<double>(j) / d_h);
            const double angle = static_cast<double>(t) / denom;
            p(t, j) = std::sin(angle);
            if (j + 1 < d_h) p(t, j + 1) = std::cos(angle);
        }
    }
    return p;
}

namespace {

Matrix gaussian_init(std::size_t rows, std::size_t cols, SeededRng& rng) {
    // variance 2 / (fan_in + fan_out)
    const double stddev = std::sqrt(2.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (double& v : m.data()) v = stddev * rng.next_gaussian();
    return m;
}

Matrix col_slice(const Matrix& m, std::size_t c0, std::size_t width) {
    Matrix out(m.rows(), width);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* src = m.row_ptr(i) + c0;
        double* dst = out.row_ptr(i);
        for (std::size_t j = 0; j < width; ++j) dst[j] = src[j];
    }
    return out;
}

void place_cols(Matrix& dst, std::size_t c0, const Matrix& src) {
    for (std::size_t i = 0; i < src.rows(); ++i) {
        const double* s = src.row_ptr(i);
        double* d = dst.row_ptr(i) + c0;
        for (std::size_t j = 0; j < src.cols(); ++j) d[j] = s[j];
    }
}

/// d(softmax)/d(logits) applied row-wise: ds = a .* (da - rowsum(da .* a)).
Matrix softmax_rows_backward(const Matrix& attn, const Matrix& d_attn) {
    Matrix out(attn.rows(), attn.cols());
    for (std::size_t i = 0; i < attn.rows(); ++i) {
        const double* a = attn.row_ptr(i);
        const double* da = d_attn.row_ptr(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < attn.cols(); ++j) dot += a[j] * da[j];
        double* o = out.row_ptr(i);
        for (std::size_t j = 0; j < attn.cols(); ++j) o[j] = a[j] * (da[j] - dot);
    }
    return out;
}

Matrix pool_rows(const Matrix& m, Pooling pooling) {
    Matrix out(1, m.cols());
    if (pooling == Pooling::last) {
        for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) = m(m.rows() - 1, j);
        return out;
    }
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
    }
    for (double& v : out.data()) v /= static_cast<double>(m.rows());
    return out;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg) {
    cfg.validate();
    SeededRng rng(cfg.seed);
    const std::size_t dk = cfg.head_dim();
    const std::size_t df = cfg.ff_dim();

    ModelParams p;
    p.w_e = gaussian_init(cfg.d, cfg.d_h, rng);
    p.pos = positional_encoding(cfg.T, cfg.d_h);
    p.blocks.resize(cfg.n_blocks);
    for (auto& block : p.blocks) {
        block.w_q.reserve(cfg.h);
        block.w_k.reserve(cfg.h);
        block.w_v.reserve(cfg.h);
        for (std::size_t i = 0; i < cfg.h; ++i) {
            block.w_q.push_back(gaussian_init(cfg.d_h, dk, rng));
            block.w_k.push_back(gaussian_init(cfg.d_h, dk, rng));
            block.w_v.push_back(gaussian_init(cfg.d_h, dk, rng));
        }
        block.w_o = gaussian_init(cfg.d_h, cfg.d_h, rng);
    }
    p.w1 = gaussian_init(cfg.d_h, df, rng);
    p.b1 = Matrix(1, df);
    p.w2 = gaussian_init(df, 1, rng);
    p.b2 = Matrix(1, 1);
    return p;
}

Matrix embed(const Matrix& x, const ModelParams& params) {
    if (x.rows() != params.pos.rows() || x.cols() != params.w_e.rows()) {
        throw ShapeError("embed: window " + x.shape_str() + " vs w_e " +
                         params.w_e.shape_str() + ", pos " + params.pos.shape_str());
    }
    return add(matmul(x, params.w_e), params.pos);
}

HeadTrace attention_head_traced(const Matrix& h, const Matrix& w_q, const Matrix& w_k,
                                const Matrix& w_v) {
    HeadTrace t;
    t.q = matmul(h, w_q);
    t.k = matmul(h, w_k);
    t.v = matmul(h, w_v);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(w_q.cols()));
    t.attn = softmax_rows(scale(matmul_nt(t.q, t.k), inv_sqrt_dk));
    return t;
}

Matrix attention_head(const Matrix& h, const Matrix& w_q, const Matrix& w_k, const Matrix& w_v) {
    HeadTrace t = attention_head_traced(h, w_q, w_k, w_v);
    return matmul(t.attn, t.v);
}

BlockTrace multi_head_traced(const Matrix& h, const BlockParams& block, double dropout_rate,
                             bool training, SeededRng* rng) {
    const std::size_t n_heads = block.w_q.size();
    if (n_heads == 0 || block.w_k.size() != n_heads || block.w_v.size() != n_heads) {
        throw ShapeError("multi_head: inconsistent head weight counts");
    }
    const std::size_t dk = block.w_q[0].cols();

    BlockTrace t;
    t.input = h;
    t.heads.reserve(n_heads);
    t.concat = Matrix(h.rows(), n_heads * dk);
    for (std::size_t i = 0; i < n_heads; ++i) {
        if (block.w_q[i].cols() != dk || block.w_k[i].cols() != dk ||
            block.w_v[i].cols() != dk) {
            throw ShapeError("multi_head: head " + std::to_string(i) +
                             " width differs from " + std::to_string(dk));
        }
        HeadTrace ht = attention_head_traced(h, block.w_q[i], block.w_k[i], block.w_v[i]);
        place_cols(t.concat, i * dk, matmul(ht.attn, ht.v));
        t.heads.push_back(std::move(ht));
    }
    t.output = add(matmul(t.concat, block.w_o), h);
    if (training && dropout_rate > 0.0) {
        if (!rng) throw ParameterError("multi_head: training dropout requires an rng");
        t.mask = dropout_mask(t.output.rows(), t.output.cols(), dropout_rate, *rng);
        t.output = hadamard(t.output, t.mask);
    }
    return t;
}

Matrix multi_head(const Matrix& h, const BlockParams& block, double dropout_rate, bool training,
                  SeededRng* rng) {
    return multi_head_traced(h, block, dropout_rate, training, rng).output;
}

double classify_head(const Matrix& h_final, const ModelParams& params, const ModelConfig& cfg) {
    const Matrix pooled = pool_rows(h_final, cfg.pooling);
    const Matrix z = relu(add(matmul(pooled, params.w1), params.b1));
    const double y_pre = matmul(z, params.w2)(0, 0) + params.b2(0, 0);
    return sigmoid_scalar(y_pre);
}

ForwardTrace forward(const Matrix& x, const ModelParams& params, const ModelConfig& cfg,
                     bool training, SeededRng* rng) {
    ForwardTrace t;
    t.x = x;
    t.h0 = embed(x, params);
    Matrix h = t.h0;
    t.blocks.reserve(params.blocks.size());
    for (const auto& block : params.blocks) {
        BlockTrace bt = multi_head_traced(h, block, cfg.dropout_rate, training, rng);
        h = bt.output;
        t.blocks.push_back(std::move(bt));
    }
    t.pooled = pool_rows(h, cfg.pooling);
    t.z_pre = add(matmul(t.pooled, params.w1), params.b1);
    t.z = relu(t.z_pre);
    if (training && cfg.dropout_rate > 0.0) {
        if (!rng) throw ParameterError("forward: training dropout requires an rng");
        t.z_mask = dropout_mask(1, t.z.cols(), cfg.dropout_rate, *rng);
        t.z = hadamard(t.z, t.z_mask);
    }
    t.y_pre = matmul(t.z, params.w2)(0, 0) + params.b2(0, 0);
    t.y_hat = sigmoid_scalar(t.y_pre);
    return t;
}

ModelParams backward(const ForwardTrace& trace, const ModelParams& params, const ModelConfig& cfg,
                     int label, double pos_weight) {
    if (label != 0 && label != 1) throw ParameterError("backward: label must be 0 or 1");
    if (trace.blocks.size() != params.blocks.size() || trace.z_pre.empty()) {
        throw InternalError("backward: trace does not match parameter layout");
    }

    ModelParams g = zeros_like_learnable(params);

    // loss head: clamped probabilities have zero gradient at the clamp
    double d_y_pre = 0.0;
    if (trace.y_hat > kProbClamp && trace.y_hat < 1.0 - kProbClamp) {
        const double y = static_cast<double>(label);
        d_y_pre = -pos_weight * y * (1.0 - trace.y_hat) + (1.0 - y) * trace.y_hat;
    }

    g.w2 = scale(transpose(trace.z), d_y_pre);
    g.b2(0, 0) = d_y_pre;

    Matrix dz = scale(transpose(params.w2), d_y_pre);  // 1 x d_f
    if (!trace.z_mask.empty()) dz = hadamard(dz, trace.z_mask);
    Matrix dz_pre = dz;
    for (std::size_t j = 0; j < dz_pre.cols(); ++j) {
        if (trace.z_pre(0, j) <= 0.0) dz_pre(0, j) = 0.0;
    }

    g.w1 = matmul_tn(trace.pooled, dz_pre);
    g.b1 = dz_pre;

    const Matrix d_pooled = matmul_nt(dz_pre, params.w1);  // 1 x d_h
    const std::size_t T = cfg.T;
    Matrix dh(T, cfg.d_h);
    if (cfg.pooling == Pooling::last) {
        for (std::size_t j = 0; j < cfg.d_h; ++j) dh(T - 1, j) = d_pooled(0, j);
    } else {
        const double inv_t = 1.0 / static_cast<double>(T);
        for (std::size_t i = 0; i < T; ++i) {
            for (std::size_t j = 0; j < cfg.d_h; ++j) dh(i, j) = d_pooled(0, j) * inv_t;
        }
    }

    const std::size_t dk = cfg.head_dim();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    for (std::size_t b = params.blocks.size(); b-- > 0;) {
        const BlockParams& bp = params.blocks[b];
        const BlockTrace& bt = trace.blocks[b];

        Matrix d_pre = bt.mask.empty() ? dh : hadamard(dh, bt.mask);
        add_inplace(g.blocks[b].w_o, matmul_tn(bt.concat, d_pre));
        const Matrix d_concat = matmul_nt(d_pre, bp.w_o);

        Matrix d_input = d_pre;  // residual path
        for (std::size_t i = 0; i < bp.w_q.size(); ++i) {
            const HeadTrace& ht = bt.heads[i];
            const Matrix d_out_i = col_slice(d_concat, i * dk, dk);

            const Matrix d_attn = matmul_nt(d_out_i, ht.v);
            const Matrix d_v = matmul_tn(ht.attn, d_out_i);
            const Matrix d_scores = scale(softmax_rows_backward(ht.attn, d_attn), inv_sqrt_dk);
            const Matrix d_q = matmul(d_scores, ht.k);
            const Matrix d_k = matmul_tn(d_scores, ht.q);

            add_inplace(g.blocks[b].w_q[i], matmul_tn(bt.input, d_q));
            add_inplace(g.blocks[b].w_k[i], matmul_tn(bt.input, d_k));
            add_inplace(g.blocks[b].w_v[i], matmul_tn(bt.input, d_v));

            add_inplace(d_input, matmul_nt(d_q, bp.w_q[i]));
            add_inplace(d_input, matmul_nt(d_k, bp.w_k[i]));
            add_inplace(d_input, matmul_nt(d_v, bp.w_v[i]));
        }
        dh = std::move(d_input);
    }

    g.w_e = matmul_tn(trace.x, dh);
    return g;
}

ModelParams zeros_like_learnable(const ModelParams& params) {
    ModelParams z;
    z.w_e = Matrix(params.w_e.rows(), params.w_e.cols());
    z.blocks.resize(params.blocks.size());
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        const auto& src = params.blocks[b];
        auto& dst = z.blocks[b];
        for (std::size_t i = 0; i < src.w_q.size(); ++i) {
            dst.w_q.emplace_back(src.w_q[i].rows(), src.w_q[i].cols());
            dst.w_k.emplace_back(src.w_k[i].rows(), src.w_k[i].cols());
            dst.w_v.emplace_back(src.w_v[i].rows(), src.w_v[i].cols());
        }
        dst.w_o = Matrix(src.w_o.rows(), src.w_o.cols());
    }
    z.w1 = Matrix(params.w1.rows(), params.w1.cols());
    z.b1 = Matrix(params.b1.rows(), params.b1.cols());
    z.w2 = Matrix(params.w2.rows(), params.w2.cols());
    z.b2 = Matrix(params.b2.rows(), params.b2.cols());
    return z;
}

template <typename P, typename M>
static std::vector<M*> learnable_tensors_impl(P& params) {
    std::vector<M*> out;
    out.push_back(&params.w_e);
    for (auto& block : params.blocks) {
        for (std::size_t i = 0; i < block.w_q.size(); ++i) {
            out.push_back(&block.w_q[i]);
            out.push_back(&block.w_k[i]);
            out.push_back(&block.w_v[i]);
        }
        out.push_back(&block.w_o);
    }
    out.push_back(&params.w1);
    out.push_back(&params.b1);
    out.push_back(&params.w2);
    out.push_back(&params.b2);
    return out;
}

std::vector<Matrix*> learnable_tensors(ModelParams& params) {
    return learnable_tensors_impl<ModelParams, Matrix>(params);
}

std::vector<const Matrix*> learnable_tensors(const ModelParams& params) {
    return learnable_tensors_impl<const ModelParams, const Matrix>(params);
}

template <typename P, typename M>
static std::vector<std::pair<std::string, M*>> tensor_manifest_impl(P& params) {
    std::vector<std::pair<std::string, M*>> out;
    out.emplace_back("w_e", &params.w_e);
    out.emplace_back("pos", &params.pos);
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        auto& block = params.blocks[b];
        const std::string prefix = "block" + std::to_string(b) + ".";
        for (std::size_t i = 0; i < block.w_q.size(); ++i) {
            const std::string head = prefix + "head" + std::to_string(i) + ".";
            out.emplace_back(head + "w_q", &block.w_q[i]);
            out.emplace_back(head + "w_k", &block.w_k[i]);
            out.emplace_back(head + "w_v", &block.w_v[i]);
        }
        out.emplace_back(prefix + "w_o", &block.w_o);
    }
    out.emplace_back("w_1", &params.w1);
    out.emplace_back("b_1", &params.b1);
    out.emplace_back("w_2", &params.w2);
    out.emplace_back("b_2", &params.b2);
    return out;
}

std::vector<std::pair<std::string, const Matrix*>> tensor_manifest(const ModelParams& params) {
    return tensor_manifest_impl<const ModelParams, const Matrix>(params);
}

std::vector<std::pair<std::string, Matrix*>> tensor_manifest(ModelParams& params) {
    return tensor_manifest_impl<ModelParams, Matrix>(params);
}

ModelParams shaped_params(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t dk = cfg.head_dim();
    const std::size_t df = cfg.ff_dim();
    ModelParams p;
    p.w_e = Matrix(cfg.d, cfg.d_h);
    p.pos = Matrix(cfg.T, cfg.d_h);
    p.blocks.resize(cfg.n_blocks);
    for (auto& block : p.blocks) {
        for (std::size_t i = 0; i < cfg.h; ++i) {
            block.w_q.emplace_back(cfg.d_h, dk);
            block.w_k.emplace_back(cfg.d_h, dk);
            block.w_v.emplace_back(cfg.d_h, dk);
        }
        block.w_o = Matrix(cfg.d_h, cfg.d_h);
    }
    p.w1 = Matrix(cfg.d_h, df);
    p.b1 = Matrix(1, df);
    p.w2 = Matrix(df, 1);
    p.b2 = Matrix(1, 1);
    return p;
}

std::vector<double> flatten_learnable(const ModelParams& params) {
    std::vector<double> flat;
    for (const Matrix* m : learnable_tensors(params)) {
        flat.insert(flat.end(), m->data().begin(), m->data().end());
    }
    return flat;
}

void unflatten_learnable(ModelParams& params, const std::vector<double>& flat) {
    std::size_t off = 0;
    for (Matrix* m : learnable_tensors(params)) {
        if (off + m->size() > flat.size()) {
            throw InternalError("unflatten_learnable: vector too short");
        }
        std::copy(flat.begin() + off, flat.begin() + off + m->size(), m->data().begin());
        off += m->size();
    }
    if (off != flat.size()) throw InternalError("unflatten_learnable: vector too long");
}

}  // namespace lsnt
