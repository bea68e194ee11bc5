#include "lsnt/train.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "lsnt/errors.hpp"
#include "lsnt/gradcheck.hpp"
#include "lsnt/metrics.hpp"

static_assert(std::endian::native == std::endian::little,
              "model payloads are written as little-endian doubles");

namespace lsnt {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("beta1 and beta2 must be in [0, 1)");
    }
    if (eps <= 0.0) throw ConfigError("eps must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
}

double bce_loss(double y_hat, int label, double pos_weight) {
    if (label != 0 && label != 1) throw ParameterError("bce_loss: label must be 0 or 1");
    const double p = std::min(std::max(y_hat, kProbClamp), 1.0 - kProbClamp);
    return -(pos_weight * label * std::log(p) + (1 - label) * std::log(1.0 - p));
}

AdamState init_adam_state(const ModelParams& params) {
    return AdamState{zeros_like_learnable(params), zeros_like_learnable(params)};
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg, std::size_t t) {
    if (t < 1) throw ParameterError("adam_step: t must be >= 1");
    auto p = learnable_tensors(params);
    auto g = learnable_tensors(grads);
    auto m = learnable_tensors(state.m);
    auto v = learnable_tensors(state.v);
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
        throw InternalError("adam_step: tensor count mismatch");
    }

    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!p[i]->same_shape(*g[i])) {
            throw InternalError("adam_step: gradient shape " + g[i]->shape_str() +
                                " does not match parameter " + p[i]->shape_str());
        }
        auto& pd = p[i]->data();
        const auto& gd = g[i]->data();
        auto& md = m[i]->data();
        auto& vd = v[i]->data();
        for (std::size_t k = 0; k < pd.size(); ++k) {
            md[k] = cfg.beta1 * md[k] + (1.0 - cfg.beta1) * gd[k];
            vd[k] = cfg.beta2 * vd[k] + (1.0 - cfg.beta2) * gd[k] * gd[k];
            pd[k] -= cfg.learning_rate * (md[k] / c1) / (std::sqrt(vd[k] / c2) + cfg.eps);
        }
    }
}

namespace {

void seeded_shuffle(std::vector<std::size_t>& idx, SeededRng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.next_below(i)]);
    }
}

std::vector<ScoredSample> score_set(const std::vector<SequenceWindow>& windows,
                                    const ModelParams& params, const ModelConfig& cfg) {
    std::vector<ScoredSample> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        out.push_back({forward(w.features, params, cfg, false, nullptr).y_hat, w.label});
    }
    return out;
}

}  // namespace

TrainResult train(const std::vector<SequenceWindow>& train_windows,
                  const std::vector<SequenceWindow>& val_windows, const ModelConfig& mcfg,
                  const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    if (train_windows.empty()) throw DataError("training split is empty");
    if (val_windows.empty()) throw DataError("validation split is empty");
    for (const auto& w : train_windows) {
        if (w.features.rows() != mcfg.T || w.features.cols() != mcfg.d) {
            throw ShapeError("train: window " + w.features.shape_str() + " does not match cfg " +
                             std::to_string(mcfg.T) + "x" + std::to_string(mcfg.d));
        }
    }
    {
        bool any_pos = false, any_neg = false;
        for (const auto& w : val_windows) (w.label ? any_pos : any_neg) = true;
        if (!any_pos || !any_neg) {
            throw DataError("validation split needs both classes for AUC early stopping");
        }
    }

    const auto t_start = std::chrono::steady_clock::now();

    double pos_weight = tcfg.pos_weight;
    if (pos_weight <= 0.0) {
        std::size_t n_pos = 0;
        for (const auto& w : train_windows) n_pos += (w.label == 1);
        const std::size_t n_neg = train_windows.size() - n_pos;
        pos_weight = (n_pos > 0 && n_neg > 0)
                         ? static_cast<double>(n_neg) / static_cast<double>(n_pos)
                         : 1.0;
    }

    TrainResult result{init_params(mcfg), {}};
    if (tcfg.epochs == 0) return result;

    ModelParams params = result.params;
    AdamState adam = init_adam_state(params);
    SeededRng rng(tcfg.seed);  // drives shuffling and dropout, in loop order

    std::vector<std::size_t> order(train_windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double best_auc = -1.0;
    std::size_t bad_epochs = 0;
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        seeded_shuffle(order, rng);
        double loss_sum = 0.0;
        for (std::size_t batch_start = 0; batch_start < order.size();
             batch_start += tcfg.batch_size) {
            const std::size_t batch_end =
                std::min(batch_start + tcfg.batch_size, order.size());
            ModelParams grad_sum = zeros_like_learnable(params);
            for (std::size_t k = batch_start; k < batch_end; ++k) {
                const SequenceWindow& w = train_windows[order[k]];
                ForwardTrace trace = forward(w.features, params, mcfg, true, &rng);
                loss_sum += bce_loss(trace.y_hat, w.label, pos_weight);
                ModelParams grads = backward(trace, params, mcfg, w.label, pos_weight);
                auto acc = learnable_tensors(grad_sum);
                auto src = learnable_tensors(grads);
                for (std::size_t i = 0; i < acc.size(); ++i) add_inplace(*acc[i], *src[i]);
            }
            const double inv_batch = 1.0 / static_cast<double>(batch_end - batch_start);
            for (Matrix* g : learnable_tensors(grad_sum)) {
                for (double& x : g->data()) x *= inv_batch;
            }
            adam_step(params, grad_sum, adam, tcfg, ++step);
        }

        result.report.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
        const double epoch_auc = auc(score_set(val_windows, params, mcfg));
        result.report.val_auc.push_back(epoch_auc);

        if (epoch_auc > best_auc) {
            best_auc = epoch_auc;
            result.report.best_epoch = epoch;
            result.params = params;
            bad_epochs = 0;
        } else if (++bad_epochs >= tcfg.patience) {
            break;
        }
    }

    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

PreparedData prepare_splits(const std::vector<TransactionRecord>& records, std::size_t T,
                            std::size_t stride, LabelRule rule) {
    const RecordSplits recs = split_records(records);
    if (recs.train.empty()) throw DataError("training split has no records");
    PreparedData out;
    out.encoder = fit_encoder(recs.train);
    out.windows.train = windowize(encode_accounts(recs.train, out.encoder), T, stride, rule);
    out.windows.val = windowize(encode_accounts(recs.val, out.encoder), T, stride, rule);
    out.windows.test = windowize(encode_accounts(recs.test, out.encoder), T, stride, rule);
    return out;
}

namespace {

constexpr char kMagic[4] = {'L', 'S', 'N', 'T'};
constexpr std::uint16_t kVersion = 1;

nlohmann::json config_to_json(const ModelConfig& cfg) {
    return {{"d", cfg.d},
            {"d_h", cfg.d_h},
            {"h", cfg.h},
            {"T", cfg.T},
            {"n_blocks", cfg.n_blocks},
            {"d_f", cfg.ff_dim()},
            {"dropout_rate", cfg.dropout_rate},
            {"pooling", cfg.pooling == Pooling::mean ? "mean" : "last"},
            {"seed", cfg.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.d = j.at("d").get<std::size_t>();
    cfg.d_h = j.at("d_h").get<std::size_t>();
    cfg.h = j.at("h").get<std::size_t>();
    cfg.T = j.at("T").get<std::size_t>();
    cfg.n_blocks = j.at("n_blocks").get<std::size_t>();
    cfg.d_f = j.at("d_f").get<std::size_t>();
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    const std::string pooling = j.at("pooling").get<std::string>();
    if (pooling == "mean") {
        cfg.pooling = Pooling::mean;
    } else if (pooling == "last") {
        cfg.pooling = Pooling::last;
    } else {
        throw FormatError("unknown pooling '" + pooling + "'");
    }
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

nlohmann::json encoder_to_json(const FeatureEncoder& enc) {
    nlohmann::json numeric = nlohmann::json::array();
    for (const auto& s : enc.numeric) {
        numeric.push_back({{"name", s.name}, {"mean", s.mean}, {"std", s.stddev}});
    }
    return {{"numeric", numeric}, {"dropped", enc.dropped}, {"channels", enc.channels}};
}

FeatureEncoder encoder_from_json(const nlohmann::json& j) {
    FeatureEncoder enc;
    for (const auto& s : j.at("numeric")) {
        enc.numeric.push_back({s.at("name").get<std::string>(), s.at("mean").get<double>(),
                               s.at("std").get<double>()});
    }
    enc.dropped = j.at("dropped").get<std::vector<std::string>>();
    enc.channels = j.at("channels").get<std::vector<std::string>>();
    return enc;
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

void save_model(const TrainedModel& model, const std::string& path) {
    model.cfg.validate();
    const auto manifest = tensor_manifest(model.params);

    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, mat] : manifest) {
        tensors.push_back({{"name", name}, {"rows", mat->rows()}, {"cols", mat->cols()}});
    }
    nlohmann::json header = {{"config", config_to_json(model.cfg)},
                             {"encoder", encoder_to_json(model.encoder)},
                             {"tensors", tensors},
                             {"threshold", model.threshold}};
    const std::string header_text = header.dump();

    std::string blob;
    blob.append(kMagic, 4);
    put_u16(blob, kVersion);
    put_u32(blob, static_cast<std::uint32_t>(header_text.size()));
    blob += header_text;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    for (const auto& [name, mat] : manifest) {
        out.write(reinterpret_cast<const char*>(mat->data().data()),
                  static_cast<std::streamsize>(mat->size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed for " + path);
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (blob.size() < 10) throw FormatError("truncated model file (no header)");
    if (std::memcmp(blob.data(), kMagic, 4) != 0) {
        throw FormatError("bad magic bytes: expected LSNT");
    }
    const std::uint16_t version = static_cast<std::uint8_t>(blob[4]) |
                                  (static_cast<std::uint16_t>(static_cast<std::uint8_t>(blob[5]))
                                   << 8);
    if (version != kVersion) {
        throw FormatError("unsupported format version " + std::to_string(version));
    }
    std::uint32_t header_len = 0;
    for (int i = 0; i < 4; ++i) {
        header_len |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(blob[6 + i]))
                      << (8 * i);
    }
    if (blob.size() < 10 + static_cast<std::size_t>(header_len)) {
        throw FormatError("truncated model file (header)");
    }

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(blob.substr(10, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model header: ") + e.what());
    }

    TrainedModel model;
    try {
        model.cfg = config_from_json(header.at("config"));
        model.encoder = encoder_from_json(header.at("encoder"));
        model.threshold = header.at("threshold").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model header: ") + e.what());
    }
    model.cfg.validate();  // re-check invariants (h | d_h etc.) on load
    if (model.cfg.d != model.encoder.dim()) {
        throw FormatError("config d does not match the encoder dimension");
    }

    model.params = shaped_params(model.cfg);
    auto manifest = tensor_manifest(model.params);
    const auto& tensors = header.at("tensors");
    if (!tensors.is_array() || tensors.size() != manifest.size()) {
        throw FormatError("tensor manifest does not match the configuration");
    }
    std::size_t off = 10 + header_len;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        auto& [name, mat] = manifest[i];
        const auto& entry = tensors[i];
        if (entry.at("name").get<std::string>() != name ||
            entry.at("rows").get<std::size_t>() != mat->rows() ||
            entry.at("cols").get<std::size_t>() != mat->cols()) {
            throw FormatError("tensor manifest mismatch at '" + name + "'");
        }
        const std::size_t bytes = mat->size() * sizeof(double);
        if (off + bytes > blob.size()) throw FormatError("truncated model file (payload)");
        std::memcpy(mat->data().data(), blob.data() + off, bytes);
        off += bytes;
    }
    if (off != blob.size()) throw FormatError("trailing bytes after payload");
    return model;
}

double gradient_check_max_error(const ModelConfig& cfg, std::uint64_t data_seed, int label,
                                double pos_weight, double eps) {
    cfg.validate();
    if (cfg.dropout_rate != 0.0) {
        throw ParameterError("gradient check requires dropout_rate == 0");
    }
    const ModelParams params = init_params(cfg);
    SeededRng rng(data_seed);
    Matrix x(cfg.T, cfg.d);
    for (double& v : x.data()) v = rng.next_gaussian();

    const ForwardTrace trace = forward(x, params, cfg, true, nullptr);
    const ModelParams grads = backward(trace, params, cfg, label, pos_weight);

    auto loss_at = [&](const std::vector<double>& theta) {
        ModelParams p = params;
        unflatten_learnable(p, theta);
        return bce_loss(forward(x, p, cfg, false, nullptr).y_hat, label, pos_weight);
    };
    const std::vector<double> numeric = finite_diff_grad(loss_at, flatten_learnable(params), eps);
    const std::vector<double> analytic = flatten_learnable(grads);

    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        worst = std::max(worst, grad_rel_error(analytic[i], numeric[i]));
    }
    return worst;
}

}  // namespace lsnt
