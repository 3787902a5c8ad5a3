// SPDX-License-Identifier: Apache-2.0

#include "adds/train/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "adds/errors.hpp"
#include "adds/numerics/rng.hpp"
#include "adds/supervision/supervision.hpp"

namespace adds::train {

std::pair<std::vector<std::string>, std::vector<std::string>> open_vocab_split(std::vector<std::string> names,
                                                                               std::size_t n_seen) {
    if (n_seen >= names.size())
        throw ConfigError("open_vocab_split: n_seen " + std::to_string(n_seen) + " must be below the class count " +
                          std::to_string(names.size()));
    std::set<std::string> lowered;
    for (const auto& n : names)
        if (!lowered.insert(enc::to_lower(n)).second) throw InputError("open_vocab_split: duplicate class name '" + n + "'");
    std::sort(names.begin(), names.end(),
              [](const std::string& a, const std::string& b) { return enc::to_lower(a) < enc::to_lower(b); });
    std::vector<std::string> unseen(names.begin() + static_cast<std::ptrdiff_t>(n_seen), names.end());
    names.resize(n_seen);
    return {std::move(names), std::move(unseen)};
}

// ---------------------------------------------------------------------------

Experiment::Experiment(TrainConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    world_ = std::make_unique<enc::SyntheticWorld>(cfg_.world());
    plan_ = pyramid::build_plan(cfg_.base_size, cfg_.image_side, cfg_.levels, cfg_.cls_only);
    if (world_->image_encoder().embed_dim() != cfg_.decoder().embed_dim)
        throw ConfigError("image embedding dim " + std::to_string(world_->image_encoder().embed_dim()) +
                          " does not match decoder dim " + std::to_string(cfg_.decoder().embed_dim));
    std::tie(seen_, unseen_) = open_vocab_split(world_->class_names(), cfg_.seen_classes);
}

std::vector<std::size_t> Experiment::seen_ids() const {
    std::vector<std::size_t> out;
    for (const auto& n : seen_) out.push_back(world_->class_index(n));
    std::sort(out.begin(), out.end());
    return out;
}

MatrixD Experiment::encode_image(const pyramid::Image& image) const {
    const auto tiles = pyramid::extract_tiles(image, plan_);
    return pyramid::encode_and_stack(tiles, plan_, world_->image_encoder(), cfg_.encode_threads);
}

EncodedSet Experiment::encode(const std::vector<enc::Sample>& samples) const {
    EncodedSet out;
    for (const auto& s : samples) {
        const MatrixD tok = encode_image(s.image);
        out.tokens.push_back(tok.cast<float>());
        out.labels.push_back(s.labels);

        // CLS rows: first row of every tile, walking the stacking layout.
        const std::size_t per_tile = world_->image_encoder().tokens_per_tile(), e = tok.cols();
        const std::size_t finest = plan_.selected.back();
        std::vector<double> bottom(e, 0.0), top(tok.row(0).begin(), tok.row(0).end());
        std::size_t row = 0, n_bottom = 0;
        for (std::size_t lv : plan_.selected) {
            const auto& spec = plan_.levels[lv];
            for (std::size_t t = 0; t < spec.tiles.size(); ++t) {
                if (lv == finest) {
                    for (std::size_t j = 0; j < e; ++j) bottom[j] += tok(row, j);
                    ++n_bottom;
                }
                row += spec.cls_only ? 1 : per_tile;
            }
        }
        for (auto& v : bottom) v /= static_cast<double>(n_bottom);
        out.bottom_cls.push_back(std::move(bottom));
        out.top_cls.push_back(std::move(top));
    }
    return out;
}

const EncodedSet& Experiment::train_set() const {
    if (!train_) {
        const auto ids = seen_ids();
        train_ = std::make_unique<EncodedSet>();
        for (std::size_t i = 0; i < cfg_.train_samples; ++i) {
            EncodedSet one = encode({world_->sample("train", i, ids)});
            train_->tokens.push_back(std::move(one.tokens[0]));
            train_->labels.push_back(std::move(one.labels[0]));
            train_->bottom_cls.push_back(std::move(one.bottom_cls[0]));
            train_->top_cls.push_back(std::move(one.top_cls[0]));
        }
    }
    return *train_;
}

const EncodedSet& Experiment::test_set() const {
    if (!test_) {
        test_ = std::make_unique<EncodedSet>();
        for (std::size_t i = 0; i < cfg_.test_samples; ++i) {
            EncodedSet one = encode({world_->sample("test", i)});
            test_->tokens.push_back(std::move(one.tokens[0]));
            test_->labels.push_back(std::move(one.labels[0]));
            test_->bottom_cls.push_back(std::move(one.bottom_cls[0]));
            test_->top_cls.push_back(std::move(one.top_cls[0]));
        }
    }
    return *test_;
}

namespace {

void check_unique(const std::vector<std::string>& names) {
    if (names.empty()) throw InputError("vocabulary is empty");
    std::set<std::string> lowered;
    for (const auto& n : names)
        if (!lowered.insert(enc::to_lower(n)).second) throw InputError("vocabulary: duplicate label '" + n + "'");
}

}  // namespace

Vocabulary Experiment::vocabulary(const std::vector<std::string>& names) const {
    check_unique(names);
    return {names, enc::embed_labels(names, world_->text_encoder())};
}

Vocabulary Experiment::vocabulary(const enc::EmbeddingTable& table) const {
    if (table.dim != cfg_.embed_dim)
        throw ConfigError("vocabulary dim " + std::to_string(table.dim) + " does not match model dim " +
                          std::to_string(cfg_.embed_dim));
    check_unique(table.labels);
    return {table.labels, table.as_matrix()};
}

LabelMatrix Experiment::labels_for(const EncodedSet& set, const Vocabulary& vocab) const {
    std::vector<std::size_t> col;
    for (const auto& n : vocab.names) col.push_back(world_->class_index(n));
    LabelMatrix out(set.size(), std::vector<std::uint8_t>(vocab.names.size(), 0));
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t c = 0; c < col.size(); ++c)
            if (col[c] != enc::SyntheticWorld::npos) out[i][c] = set.labels[i][col[c]];
    return out;
}

// ---------------------------------------------------------------------------

namespace {

MatrixF select_rows(const MatrixF& m, std::span<const std::size_t> rows) {
    MatrixF out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
    return out;
}

double sample_loss(const decoder::Model<float>& model, const MatrixF& queries, const MatrixF& tokens,
                   std::span<const std::uint8_t> labels, const sup::AslConfig& asl) {
    const decoder::ForwardContext<float> ctx{};
    const MatrixF q = decoder::stack_forward(queries, tokens, model.stack, ctx);
    const auto probs = decoder::classify(q, model.head);
    return static_cast<double>(sup::asl_loss<float>(probs, labels, asl).loss);
}

const char* const kStreamLabels[] = {"shuffle", "dropout", "select", "rotate"};

}  // namespace

double dataset_loss(const Experiment& exp, const decoder::Model<float>& model, const EncodedSet& set,
                    const Vocabulary& vocab) {
    const MatrixF q0 = vocab.embeddings.cast<float>();
    const auto labels = exp.labels_for(set, vocab);
    const auto asl = exp.config().asl();
    double total = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) total += sample_loss(model, q0, set.tokens[i], labels[i], asl);
    return total / static_cast<double>(set.size());
}

TrainState initial_state(const Experiment& exp) {
    TrainState s{decoder::Model<float>::make(exp.config().decoder(), exp.config().seed), {}, 0, 0, 0.0, {}};
    auto params = s.model.params();
    s.adam = num::AdamState<float>::for_params(params);
    s.initial_loss = dataset_loss(exp, s.model, exp.train_set(), exp.vocabulary(exp.seen()));
    return s;
}

void train(const Experiment& exp, TrainState& state, std::optional<std::size_t> stop_after,
           const std::function<void(const TrainState&)>& on_epoch) {
    const TrainConfig& cfg = exp.config();
    const EncodedSet& data = exp.train_set();
    const Vocabulary vocab = exp.vocabulary(exp.seen());
    const MatrixF q_all = vocab.embeddings.cast<float>();
    const LabelMatrix labels = exp.labels_for(data, vocab);
    const auto asl = cfg.asl();
    const std::size_t k = vocab.names.size();
    const bool selective = k > cfg.select_above;

    num::AdamConfig opt;
    opt.lr = cfg.learning_rate();
    opt.weight_decay = cfg.weight_decay;
    auto params = state.model.params();

    const num::SeedStream shuffle_root(cfg.seed, kStreamLabels[0]);
    const num::SeedStream dropout_root(cfg.seed, kStreamLabels[1]);
    const num::SeedStream select_root(cfg.seed, kStreamLabels[2]);
    const num::SeedStream rotate_root(cfg.seed, kStreamLabels[3]);

    const std::size_t last = std::min(cfg.epochs, stop_after.value_or(cfg.epochs));
    for (std::size_t epoch = state.epochs_done + 1; epoch <= last; ++epoch) {
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        num::SeedStream shuffle = shuffle_root.fork(epoch);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double epoch_total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const auto batch_n = static_cast<float>(end - start);
            state.model.zero_grad();
            num::SeedStream dropout = dropout_root.fork(state.steps_done);

            std::vector<std::size_t> chosen;
            if (selective) {
                std::vector<std::vector<std::uint8_t>> batch_labels;
                for (std::size_t b = start; b < end; ++b) batch_labels.push_back(labels[order[b]]);
                num::SeedStream sel = select_root.fork(state.steps_done);
                chosen = sup::select_labels(batch_labels, cfg.alpha, sel).selected;
            } else {
                chosen.resize(k);
                std::iota(chosen.begin(), chosen.end(), std::size_t{0});
            }
            const MatrixF q0 = selective ? select_rows(q_all, chosen) : q_all;

            for (std::size_t b = start; b < end; ++b) {
                const std::size_t idx = order[b];
                std::vector<std::uint8_t> y(chosen.size());
                for (std::size_t c = 0; c < chosen.size(); ++c) y[c] = labels[idx][chosen[c]];

                const decoder::ForwardContext<float> ctx{true, &dropout};
                decoder::StackCache<float> cache;
                MatrixF q;
                if (cfg.rotate_augment) {
                    num::SeedStream rs = rotate_root.fork(state.steps_done).fork(b - start);
                    const MatrixF rot = num::random_orthogonal<float>(q0.cols(), rs);
                    q = decoder::stack_forward(num::matmul(q0, rot), num::matmul(data.tokens[idx], rot),
                                               state.model.stack, ctx, &cache);
                } else {
                    q = decoder::stack_forward(q0, data.tokens[idx], state.model.stack, ctx, &cache);
                }
                const auto probs = decoder::classify(q, state.model.head);
                auto loss = sup::asl_loss<float>(probs, y, asl);
                epoch_total += static_cast<double>(loss.loss);
                for (auto& g : loss.grad) g /= batch_n;
                const MatrixF dq = decoder::classify_backward(q, probs, loss.grad, state.model.head);
                decoder::stack_backward(dq, cache, state.model.stack);
            }
            // A zero learning rate leaves the weights untouched, so the step is skipped.
            if (opt.lr > 0.0) num::adam_step<float>(params, opt, state.adam);
            ++state.steps_done;
        }
        state.epoch_loss.push_back(epoch_total / static_cast<double>(data.size()));
        state.epochs_done = epoch;
        if (on_epoch) on_epoch(state);
    }
}

MatrixD predict(const decoder::Model<float>& model, const EncodedSet& set, const Vocabulary& vocab) {
    const MatrixF q0 = vocab.embeddings.cast<float>();
    MatrixD out(set.size(), vocab.names.size());
    const decoder::ForwardContext<float> ctx{};
    for (std::size_t i = 0; i < set.size(); ++i) {
        const MatrixF q = decoder::stack_forward(q0, set.tokens[i], model.stack, ctx);
        const auto probs = decoder::classify(q, model.head);
        for (std::size_t c = 0; c < probs.size(); ++c) out(i, c) = static_cast<double>(probs[c]);
    }
    return out;
}

MetricsReport evaluate(const Experiment& exp, const decoder::Model<float>& model, const EncodedSet& set,
                       const Vocabulary& vocab) {
    if (set.size() == 0) throw InputError("evaluate: empty dataset");
    if (vocab.embeddings.cols() != model.stack.config.embed_dim)
        throw ConfigError("vocabulary dim " + std::to_string(vocab.embeddings.cols()) + " does not match model dim " +
                          std::to_string(model.stack.config.embed_dim));
    return compute_metrics(predict(model, set, vocab), exp.labels_for(set, vocab), exp.config().ks, vocab.names);
}

MetricsReport evaluate_cosine(const Experiment& exp, const EncodedSet& set, const Vocabulary& vocab,
                              bool use_bottom_level) {
    if (set.size() == 0) throw InputError("evaluate_cosine: empty dataset");
    MatrixD scores(set.size(), vocab.names.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& img = use_bottom_level ? set.bottom_cls[i] : set.top_cls[i];
        const auto res = sup::cosine_baseline(img, vocab.embeddings, exp.config().threshold);
        std::copy(res.scores.begin(), res.scores.end(), scores.row(i).begin());
    }
    return compute_metrics(scores, exp.labels_for(set, vocab), exp.config().ks, vocab.names);
}

// ---------------------------------------------------------------------------

std::vector<NamedBlob> export_weights(std::span<num::Param<float>* const> params) {
    std::vector<NamedBlob> out;
    for (const auto* p : params) {
        NamedBlob b{p->name, static_cast<std::uint32_t>(p->value.rows()), static_cast<std::uint32_t>(p->value.cols()),
                    p->value.values()};
        out.push_back(std::move(b));
    }
    return out;
}

void import_weights(std::span<num::Param<float>* const> params, const std::vector<NamedBlob>& blobs,
                    const std::string& what) {
    if (blobs.size() != params.size())
        throw FormatError(what + ": checkpoint has " + std::to_string(blobs.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        const auto& b = blobs[i];
        if (b.name != p.name || b.rows != p.value.rows() || b.cols != p.value.cols())
            throw FormatError(what + ": tensor " + std::to_string(i) + " is '" + b.name + "' " +
                              std::to_string(b.rows) + "x" + std::to_string(b.cols) + ", model expects '" + p.name +
                              "' " + p.value.shape());
    }
    for (std::size_t i = 0; i < params.size(); ++i) std::copy(blobs[i].data.begin(), blobs[i].data.end(), params[i]->value.data().begin());
}

Checkpoint to_checkpoint(const Experiment& exp, const TrainState& state) {
    Checkpoint c;
    c.config_text = exp.config().to_text();
    c.config_hash = exp.config().hash();
    auto model = state.model;
    auto params = model.params();
    c.weights = export_weights(params);
    c.adam_step = state.adam.step;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = *params[i];
        const auto blob = [&](const MatrixF& m) {
            return NamedBlob{p.name, static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()),
                             m.values()};
        };
        c.first_moment.push_back(blob(state.adam.first_moment[i]));
        c.second_moment.push_back(blob(state.adam.second_moment[i]));
    }
    for (const char* label : kStreamLabels) {
        const num::SeedStream s(exp.config().seed, label);
        c.streams.push_back({label, s.key(), state.steps_done});
    }
    c.epochs_done = static_cast<std::uint32_t>(state.epochs_done);
    c.steps_done = state.steps_done;
    c.initial_loss = state.initial_loss;
    c.epoch_loss = state.epoch_loss;
    return c;
}

TrainState from_checkpoint(const Experiment& exp, const Checkpoint& ckpt) {
    if (ckpt.config_hash != exp.config().hash())
        throw ConfigError("checkpoint config hash does not match the experiment config");
    TrainState s{decoder::Model<float>::make(exp.config().decoder(), exp.config().seed), {}, 0, 0, 0.0, {}};
    auto params = s.model.params();
    import_weights(params, ckpt.weights, "weights");
    s.adam = num::AdamState<float>::for_params(params);
    s.adam.step = ckpt.adam_step;
    std::vector<num::Param<float>> m_tmp, v_tmp;
    for (auto* p : params) {
        m_tmp.emplace_back(p->name, MatrixF(p->value.rows(), p->value.cols()));
        v_tmp.emplace_back(p->name, MatrixF(p->value.rows(), p->value.cols()));
    }
    std::vector<num::Param<float>*> mp, vp;
    for (auto& p : m_tmp) mp.push_back(&p);
    for (auto& p : v_tmp) vp.push_back(&p);
    import_weights(mp, ckpt.first_moment, "adam first moment");
    import_weights(vp, ckpt.second_moment, "adam second moment");
    for (std::size_t i = 0; i < params.size(); ++i) {
        s.adam.first_moment[i] = m_tmp[i].value;
        s.adam.second_moment[i] = v_tmp[i].value;
    }
    for (const auto& st : ckpt.streams) {
        const num::SeedStream expect(exp.config().seed, st.label);
        if (expect.key() != st.key) throw FormatError("checkpoint stream '" + st.label + "' does not match the seed");
    }
    s.epochs_done = ckpt.epochs_done;
    s.steps_done = ckpt.steps_done;
    s.initial_loss = ckpt.initial_loss;
    s.epoch_loss = ckpt.epoch_loss;
    if (s.epoch_loss.size() != s.epochs_done) throw FormatError("checkpoint loss history does not match its epoch count");
    return s;
}

}  // namespace adds::train
