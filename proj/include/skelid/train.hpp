#pragma once

// Training phases over the two-stream model: each stream alone, both streams
// under a weighted shared loss, or both streams plus the embedding-fusion
// head. Provides dataset preparation (normalize + resample + batch), the
// seeded training loop with the stepped learning-rate schedule, evaluation
// drivers producing ranking metrics, and a JSON model-config round-trip so a
// checkpoint is self-describing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "skelid/autograd.hpp"
#include "skelid/checkpoint.hpp"
#include "skelid/common.hpp"
#include "skelid/eval.hpp"
#include "skelid/fusion.hpp"
#include "skelid/json_write.hpp"
#include "skelid/keypoint_data.hpp"
#include "skelid/ops.hpp"
#include "skelid/optim.hpp"
#include "skelid/presets.hpp"
#include "skelid/rng.hpp"
#include "skelid/stream.hpp"
#include "skelid/synthetic.hpp"
#include "skelid/tensor.hpp"

namespace skelid {

// ------------------------------ phases ------------------------------

enum class TrainPhase { str_only, ttr_only, joint_shared, joint_fusion };

inline const char* train_phase_name(TrainPhase p) {
    switch (p) {
        case TrainPhase::str_only: return "str-only";
        case TrainPhase::ttr_only: return "ttr-only";
        case TrainPhase::joint_shared: return "joint-shared";
        case TrainPhase::joint_fusion: return "joint-fusion";
    }
    throw ValidationError("unknown training phase value");
}

inline TrainPhase parse_train_phase(const std::string& name) {
    if (name == "str-only") return TrainPhase::str_only;
    if (name == "ttr-only") return TrainPhase::ttr_only;
    if (name == "joint-shared") return TrainPhase::joint_shared;
    if (name == "joint-fusion") return TrainPhase::joint_fusion;
    throw ValidationError("unknown training phase \"" + name +
                          "\" (expected str-only, ttr-only, joint-shared, or joint-fusion)");
}

inline bool phase_uses_str(TrainPhase p) { return p != TrainPhase::ttr_only; }
inline bool phase_uses_ttr(TrainPhase p) { return p != TrainPhase::str_only; }
inline bool phase_uses_fusion_head(TrainPhase p) { return p == TrainPhase::joint_fusion; }
inline bool phase_is_joint(TrainPhase p) {
    return p == TrainPhase::joint_shared || p == TrainPhase::joint_fusion;
}

// Per-phase optimizer defaults: the spatial stream and both joint phases use
// Adam at 0.01; the temporal stream alone uses SGD with momentum at 0.001.
// All phases add 1e-4 weight decay.
inline OptimizerConfig preset_optimizer(TrainPhase p) {
    OptimizerConfig cfg;
    if (p == TrainPhase::ttr_only) {
        cfg.kind = OptimizerKind::sgd_momentum;
        cfg.learning_rate = 0.001;
    } else {
        cfg.kind = OptimizerKind::adam;
        cfg.learning_rate = 0.01;
    }
    cfg.weight_decay = 1e-4;
    return cfg;
}

inline LossWeights preset_loss_weights(TrainPhase p) {
    switch (p) {
        case TrainPhase::str_only: return LossWeights{1.0, 0.0, 0.0};
        case TrainPhase::ttr_only: return LossWeights{0.0, 1.0, 0.0};
        case TrainPhase::joint_shared: return shared_loss_weights();
        case TrainPhase::joint_fusion: return fusion_loss_weights();
    }
    throw ValidationError("unknown training phase value");
}

// ------------------------------ config ------------------------------

struct TrainConfig {
    TrainPhase phase = TrainPhase::str_only;
    std::int64_t num_classes = 0;
    std::string preset = "body17";
    std::uint64_t seed = 1;
    std::int64_t epochs = 120;
    std::int64_t train_batch = 32;
    std::int64_t test_batch = 8;
    std::int64_t target_frames = 60;
    std::int64_t frame_skip = 1;
    OptimizerConfig optimizer;
    LossWeights loss_weights;
    bool warm_start = true;  // joint phases: pre-train each stream alone first
    StreamConfig str_stream;
    StreamConfig ttr_stream;
    FusionHeadConfig fusion;

    std::int64_t vertex_count() const { return str_stream.vertex_count; }

    void validate() const {
        if (num_classes < 2)
            throw ValidationError("training needs at least 2 classes, got " + std::to_string(num_classes));
        const SkeletonPreset& p = skeleton_preset(preset);
        if (epochs < 1) throw ValidationError("epochs must be >= 1, got " + std::to_string(epochs));
        if (train_batch < 1)
            throw ValidationError("train_batch must be >= 1, got " + std::to_string(train_batch));
        if (test_batch < 1)
            throw ValidationError("test_batch must be >= 1, got " + std::to_string(test_batch));
        if (target_frames < 1)
            throw ValidationError("target_frames must be >= 1, got " + std::to_string(target_frames));
        if (frame_skip < 1)
            throw ValidationError("frame_skip must be >= 1, got " + std::to_string(frame_skip));
        if (!(optimizer.learning_rate > 0.0))
            throw ValidationError("learning rate must be positive, got " +
                                  format_double(optimizer.learning_rate));
        if (optimizer.weight_decay < 0.0)
            throw ValidationError("weight decay must be non-negative, got " +
                                  format_double(optimizer.weight_decay));
        if (loss_weights.w_str < 0.0 || loss_weights.w_ttr < 0.0 || loss_weights.w_fusion < 0.0)
            throw ValidationError("loss weights must be non-negative");
        if (str_stream.kind != StreamKind::spatial)
            throw ValidationError("str_stream must be a spatial-kind stream config");
        if (ttr_stream.kind != StreamKind::temporal)
            throw ValidationError("ttr_stream must be a temporal-kind stream config");
        for (const StreamConfig* s : {&str_stream, &ttr_stream}) {
            if (s->num_classes != num_classes)
                throw ValidationError("stream num_classes " + std::to_string(s->num_classes) +
                                      " does not match config num_classes " + std::to_string(num_classes));
            if (s->vertex_count != p.vertex_count)
                throw ValidationError("stream vertex_count " + std::to_string(s->vertex_count) +
                                      " does not match preset \"" + preset + "\" (" +
                                      std::to_string(p.vertex_count) + " vertices)");
            s->validate();
        }
        if (fusion.num_classes != num_classes)
            throw ValidationError("fusion head num_classes " + std::to_string(fusion.num_classes) +
                                  " does not match config num_classes " + std::to_string(num_classes));
        if (fusion.input_dim != str_stream.embedding_dim + ttr_stream.embedding_dim)
            throw ValidationError("fusion head input_dim " + std::to_string(fusion.input_dim) +
                                  " must equal the concatenated embedding width " +
                                  std::to_string(str_stream.embedding_dim + ttr_stream.embedding_dim));
        fusion.validate();
    }
};

inline TrainConfig default_train_config(TrainPhase phase, std::int64_t num_classes,
                                        const std::string& preset = "body17") {
    const SkeletonPreset& p = skeleton_preset(preset);
    TrainConfig cfg;
    cfg.phase = phase;
    cfg.num_classes = num_classes;
    cfg.preset = preset;
    cfg.optimizer = preset_optimizer(phase);
    cfg.loss_weights = preset_loss_weights(phase);
    cfg.str_stream = default_stream_config(StreamKind::spatial, num_classes, p.vertex_count);
    cfg.ttr_stream = default_stream_config(StreamKind::temporal, num_classes, p.vertex_count);
    cfg.fusion.input_dim = cfg.str_stream.embedding_dim + cfg.ttr_stream.embedding_dim;
    cfg.fusion.num_classes = num_classes;
    return cfg;
}

// --------------------------- config round-trip ---------------------------

namespace detail {

inline std::string int_array_json(const std::vector<std::int64_t>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += jsonw::num(v[i]);
    }
    return s + "]";
}

inline std::string stream_config_json(const StreamConfig& s, const char* indent) {
    std::string pad(indent);
    std::string out = "{\n";
    out += pad + "  \"stem_channels\": " + int_array_json(s.stem_channels) + ",\n";
    out += pad + "  \"stem_strides\": " + int_array_json(s.stem_strides) + ",\n";
    out += pad + "  \"stem_temporal_kernel\": " + jsonw::num(s.stem_temporal_kernel) + ",\n";
    out += pad + "  \"attention_layers\": " + jsonw::num(s.attention_layers) + ",\n";
    out += pad + "  \"heads\": " + jsonw::num(s.heads) + ",\n";
    out += pad + "  \"dk_ratio\": " + jsonw::num(s.dk_ratio) + ",\n";
    out += pad + "  \"dv_ratio\": " + jsonw::num(s.dv_ratio) + ",\n";
    out += pad + "  \"embedding_dim\": " + jsonw::num(s.embedding_dim) + "\n";
    out += pad + "}";
    return out;
}

}  // namespace detail

// The checkpoint-embedded model description: everything needed to rebuild
// the model bundle and re-run evaluation, plus training provenance. The
// embedding concatenation order is recorded explicitly.
inline std::string train_config_json(const TrainConfig& cfg) {
    std::string out = "{\n";
    out += "  \"kind\": \"model-config\",\n";
    out += "  \"phase\": " + jsonw::str(train_phase_name(cfg.phase)) + ",\n";
    out += "  \"num_classes\": " + jsonw::num(cfg.num_classes) + ",\n";
    out += "  \"vertex_count\": " + jsonw::num(cfg.vertex_count()) + ",\n";
    out += "  \"preset\": " + jsonw::str(cfg.preset) + ",\n";
    out += "  \"seed\": " + jsonw::num(cfg.seed) + ",\n";
    out += "  \"epochs\": " + jsonw::num(cfg.epochs) + ",\n";
    out += "  \"train_batch\": " + jsonw::num(cfg.train_batch) + ",\n";
    out += "  \"test_batch\": " + jsonw::num(cfg.test_batch) + ",\n";
    out += "  \"target_frames\": " + jsonw::num(cfg.target_frames) + ",\n";
    out += "  \"frame_skip\": " + jsonw::num(cfg.frame_skip) + ",\n";
    out += "  \"optimizer\": {\n";
    out += "    \"kind\": " + jsonw::str(optimizer_kind_name(cfg.optimizer.kind)) + ",\n";
    out += "    \"learning_rate\": " + jsonw::num(cfg.optimizer.learning_rate) + ",\n";
    out += "    \"weight_decay\": " + jsonw::num(cfg.optimizer.weight_decay) + "\n";
    out += "  },\n";
    out += "  \"loss_weights\": {\n";
    out += "    \"str\": " + jsonw::num(cfg.loss_weights.w_str) + ",\n";
    out += "    \"ttr\": " + jsonw::num(cfg.loss_weights.w_ttr) + ",\n";
    out += "    \"fusion\": " + jsonw::num(cfg.loss_weights.w_fusion) + "\n";
    out += "  },\n";
    out += std::string("  \"warm_start\": ") + (cfg.warm_start ? "true" : "false") + ",\n";
    out += "  \"fusion_concat\": \"str-then-ttr\",\n";
    out += "  \"str_stream\": " + detail::stream_config_json(cfg.str_stream, "  ") + ",\n";
    out += "  \"ttr_stream\": " + detail::stream_config_json(cfg.ttr_stream, "  ") + ",\n";
    out += "  \"fusion_head\": {\n";
    out += "    \"input_dim\": " + jsonw::num(cfg.fusion.input_dim) + ",\n";
    out += "    \"hidden1\": " + jsonw::num(cfg.fusion.hidden1) + ",\n";
    out += "    \"hidden2\": " + jsonw::num(cfg.fusion.hidden2) + ",\n";
    out += "    \"dropout_p\": " + jsonw::num(cfg.fusion.dropout_p) + "\n";
    out += "  }\n";
    out += "}\n";
    return out;
}

namespace detail {

inline const nlohmann::json& cfg_field(const nlohmann::json& j, const std::string& key) {
    if (!j.is_object() || !j.contains(key))
        throw SchemaError("model config missing field \"" + key + "\"");
    return j.at(key);
}

template <typename T>
inline T cfg_get(const nlohmann::json& j, const std::string& key) {
    try {
        return cfg_field(j, key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw SchemaError("model config field \"" + key + "\" has the wrong type");
    }
}

inline void read_stream_config(const nlohmann::json& j, const std::string& key, StreamConfig& out) {
    const nlohmann::json& s = cfg_field(j, key);
    out.stem_channels = cfg_get<std::vector<std::int64_t>>(s, "stem_channels");
    out.stem_strides = cfg_get<std::vector<std::int64_t>>(s, "stem_strides");
    out.stem_temporal_kernel = cfg_get<std::int64_t>(s, "stem_temporal_kernel");
    out.attention_layers = cfg_get<std::int64_t>(s, "attention_layers");
    out.heads = cfg_get<std::int64_t>(s, "heads");
    out.dk_ratio = cfg_get<double>(s, "dk_ratio");
    out.dv_ratio = cfg_get<double>(s, "dv_ratio");
    out.embedding_dim = cfg_get<std::int64_t>(s, "embedding_dim");
}

}  // namespace detail

inline TrainConfig parse_train_config_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("model config: ") + e.what());
    }
    if (detail::cfg_get<std::string>(doc, "kind") != "model-config")
        throw SchemaError("model config has the wrong kind tag");
    TrainConfig cfg;
    cfg.phase = parse_train_phase(detail::cfg_get<std::string>(doc, "phase"));
    cfg.num_classes = detail::cfg_get<std::int64_t>(doc, "num_classes");
    const auto vertex_count = detail::cfg_get<std::int64_t>(doc, "vertex_count");
    cfg.preset = detail::cfg_get<std::string>(doc, "preset");
    cfg.seed = detail::cfg_get<std::uint64_t>(doc, "seed");
    cfg.epochs = detail::cfg_get<std::int64_t>(doc, "epochs");
    cfg.train_batch = detail::cfg_get<std::int64_t>(doc, "train_batch");
    cfg.test_batch = detail::cfg_get<std::int64_t>(doc, "test_batch");
    cfg.target_frames = detail::cfg_get<std::int64_t>(doc, "target_frames");
    cfg.frame_skip = detail::cfg_get<std::int64_t>(doc, "frame_skip");
    const nlohmann::json& opt = detail::cfg_field(doc, "optimizer");
    const std::string opt_kind = detail::cfg_get<std::string>(opt, "kind");
    if (opt_kind == "adam") {
        cfg.optimizer.kind = OptimizerKind::adam;
    } else if (opt_kind == "sgd-momentum") {
        cfg.optimizer.kind = OptimizerKind::sgd_momentum;
    } else {
        throw SchemaError("model config has unknown optimizer kind \"" + opt_kind + "\"");
    }
    cfg.optimizer.learning_rate = detail::cfg_get<double>(opt, "learning_rate");
    cfg.optimizer.weight_decay = detail::cfg_get<double>(opt, "weight_decay");
    const nlohmann::json& lw = detail::cfg_field(doc, "loss_weights");
    cfg.loss_weights.w_str = detail::cfg_get<double>(lw, "str");
    cfg.loss_weights.w_ttr = detail::cfg_get<double>(lw, "ttr");
    cfg.loss_weights.w_fusion = detail::cfg_get<double>(lw, "fusion");
    cfg.warm_start = detail::cfg_get<bool>(doc, "warm_start");
    if (detail::cfg_get<std::string>(doc, "fusion_concat") != "str-then-ttr")
        throw SchemaError("model config has an unsupported fusion_concat order");
    cfg.str_stream.kind = StreamKind::spatial;
    cfg.ttr_stream.kind = StreamKind::temporal;
    detail::read_stream_config(doc, "str_stream", cfg.str_stream);
    detail::read_stream_config(doc, "ttr_stream", cfg.ttr_stream);
    for (StreamConfig* s : {&cfg.str_stream, &cfg.ttr_stream}) {
        s->num_classes = cfg.num_classes;
        s->vertex_count = vertex_count;
    }
    const nlohmann::json& fh = detail::cfg_field(doc, "fusion_head");
    cfg.fusion.input_dim = detail::cfg_get<std::int64_t>(fh, "input_dim");
    cfg.fusion.hidden1 = detail::cfg_get<std::int64_t>(fh, "hidden1");
    cfg.fusion.hidden2 = detail::cfg_get<std::int64_t>(fh, "hidden2");
    cfg.fusion.dropout_p = detail::cfg_get<double>(fh, "dropout_p");
    cfg.fusion.num_classes = cfg.num_classes;
    cfg.validate();
    return cfg;
}

// ------------------------------ datasets ------------------------------

// Clips after the full input pipeline: per-frame centering, per-sequence
// scale removal, then fixed-length resampling; all share one [3, T, V, 1]
// shape and can be stacked into batches directly.
struct ClipDataset {
    std::vector<Tensor> inputs;
    std::vector<std::int64_t> labels;
    std::vector<std::string> clip_ids;
    std::int64_t num_classes = 0;
    std::int64_t frames = 0;
    std::int64_t vertices = 0;

    std::int64_t size() const { return static_cast<std::int64_t>(inputs.size()); }
};

inline ClipDataset prepare_dataset(const std::vector<LabeledSequence>& clips, std::int64_t num_classes,
                                   std::int64_t target_frames, std::int64_t frame_skip) {
    if (num_classes < 2)
        throw ValidationError("dataset needs at least 2 classes, got " + std::to_string(num_classes));
    ClipDataset out;
    out.num_classes = num_classes;
    out.frames = target_frames;
    for (const LabeledSequence& clip : clips) {
        if (clip.identity < 0 || clip.identity >= num_classes)
            throw ValidationError("clip \"" + clip.clip_id + "\" has identity " +
                                  std::to_string(clip.identity) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
        KeypointSequence prepared =
            resample_to_length(normalize_sequence(clip.sequence).sequence, target_frames, frame_skip);
        if (out.vertices == 0) out.vertices = prepared.vertices();
        if (prepared.vertices() != out.vertices)
            throw ValidationError("clip \"" + clip.clip_id + "\" has " +
                                  std::to_string(prepared.vertices()) + " vertices but the dataset has " +
                                  std::to_string(out.vertices));
        out.inputs.push_back(prepared.data);
        out.labels.push_back(clip.identity);
        out.clip_ids.push_back(clip.clip_id);
    }
    return out;
}

// Resolves a list of clip ids (one side of a split manifest) against a
// generated corpus and prepares those clips.
inline ClipDataset select_split(const CorpusBundle& corpus, const std::vector<std::string>& ids,
                                std::int64_t target_frames, std::int64_t frame_skip) {
    std::map<std::string, const LabeledSequence*> by_id;
    for (const LabeledSequence& clip : corpus.clips) by_id[clip.clip_id] = &clip;
    std::vector<LabeledSequence> picked;
    picked.reserve(ids.size());
    for (const std::string& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ValidationError("split references unknown clip id \"" + id + "\"");
        picked.push_back(*it->second);
    }
    return prepare_dataset(picked, corpus.labels.size(), target_frames, frame_skip);
}

// Stacks the indexed clips into one [batch, 3, T, V, 1] tensor.
inline Tensor stack_batch(const ClipDataset& ds, const std::vector<std::int64_t>& indices) {
    if (indices.empty()) throw ValidationError("cannot stack an empty batch");
    const Tensor& first = ds.inputs[static_cast<std::size_t>(indices.front())];
    const std::int64_t per_clip = first.numel();
    Tensor out{Shape{static_cast<std::int64_t>(indices.size()), first.dim(0), first.dim(1), first.dim(2),
                     first.dim(3)}};
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const Tensor& clip = ds.inputs[static_cast<std::size_t>(indices[b])];
        for (std::int64_t j = 0; j < per_clip; ++j) out[static_cast<std::int64_t>(b) * per_clip + j] = clip[j];
    }
    return out;
}

// ------------------------------ model bundle ------------------------------

struct ModelBundle {
    TrainPhase phase = TrainPhase::str_only;
    std::optional<StreamModel> str;
    std::optional<StreamModel> ttr;
    std::optional<FusionHeadParams> head;

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        if (str) str->collect(out);
        if (ttr) ttr->collect(out);
        if (head) head->collect(out);
        return out;
    }

    StateDict state() {
        StateDict out;
        if (str) str->collect_state(out);
        if (ttr) ttr->collect_state(out);
        if (head) head->collect_state(out);
        return out;
    }
};

// Builds exactly the modules the phase trains: one stream for the single
// phases, both for joint-shared, both plus the fusion head for joint-fusion.
// All parameters are keyed by (seed, parameter name), so one seed covers the
// whole bundle without collisions.
inline ModelBundle build_models(const TrainConfig& cfg) {
    cfg.validate();
    const SkeletonGraph graph = skeleton_preset(cfg.preset).graph();
    ModelBundle out;
    out.phase = cfg.phase;
    if (phase_uses_str(cfg.phase)) out.str.emplace(cfg.str_stream, graph, cfg.seed);
    if (phase_uses_ttr(cfg.phase)) out.ttr.emplace(cfg.ttr_stream, graph, cfg.seed);
    if (phase_uses_fusion_head(cfg.phase)) out.head.emplace("fusion", cfg.fusion, cfg.seed);
    return out;
}

// --------------------------- loss and scoring ---------------------------

// The phase objective on one batch. Single phases: plain cross-entropy on
// that stream. Joint-shared: w_str * CE_str + w_ttr * CE_ttr. Joint-fusion:
// the shared combination plus w_fusion * CE of the head applied to the
// concatenated, per-stream-normalized embeddings.
inline Val phase_training_loss(Tape& t, ModelBundle& m, const TrainConfig& cfg, const Tensor& batch,
                               const std::vector<std::int64_t>& labels, bool training,
                               std::uint64_t dropout_key) {
    Val x = t.leaf(batch);
    switch (cfg.phase) {
        case TrainPhase::str_only:
            return cross_entropy(t, m.str->forward(t, x, training).logits, labels);
        case TrainPhase::ttr_only:
            return cross_entropy(t, m.ttr->forward(t, x, training).logits, labels);
        case TrainPhase::joint_shared: {
            StreamOutput s = m.str->forward(t, x, training);
            StreamOutput u = m.ttr->forward(t, x, training);
            return combine_stream_losses(t, cross_entropy(t, s.logits, labels),
                                         cross_entropy(t, u.logits, labels), cfg.loss_weights);
        }
        case TrainPhase::joint_fusion: {
            StreamOutput s = m.str->forward(t, x, training);
            StreamOutput u = m.ttr->forward(t, x, training);
            Val fused = fuse_embeddings(t, s.embedding, u.embedding);
            Val fusion_logits = m.head->forward(t, fused, training, dropout_key);
            return combine_fusion_losses(t, cross_entropy(t, s.logits, labels),
                                         cross_entropy(t, u.logits, labels),
                                         cross_entropy(t, fusion_logits, labels), cfg.loss_weights);
        }
    }
    throw ValidationError("unknown training phase value");
}

namespace detail {

inline std::vector<double> softmax_row_values(const Tensor& logits, std::int64_t row) {
    const std::int64_t k = logits.dim(1);
    std::vector<double> out(static_cast<std::size_t>(k));
    double max_logit = logits[row * k];
    for (std::int64_t c = 1; c < k; ++c) max_logit = std::max(max_logit, logits[row * k + c]);
    double denom = 0.0;
    for (std::int64_t c = 0; c < k; ++c) {
        out[static_cast<std::size_t>(c)] = std::exp(logits[row * k + c] - max_logit);
        denom += out[static_cast<std::size_t>(c)];
    }
    for (double& v : out) v /= denom;
    return out;
}

}  // namespace detail

// Eval-mode class scores for one batch. Single phases score with that
// stream's softmax; joint-shared averages the two streams' softmax vectors;
// joint-fusion scores with the fusion head's softmax.
inline void append_batch_scores(std::vector<std::vector<double>>& out, ModelBundle& m,
                                const TrainConfig& cfg, const Tensor& batch) {
    Tape t;
    Val x = t.leaf(batch);
    const std::int64_t rows = batch.dim(0);
    switch (cfg.phase) {
        case TrainPhase::str_only:
        case TrainPhase::ttr_only: {
            StreamModel& model = cfg.phase == TrainPhase::str_only ? *m.str : *m.ttr;
            const Tensor& logits = t.value(model.forward(t, x, false).logits);
            for (std::int64_t r = 0; r < rows; ++r) out.push_back(detail::softmax_row_values(logits, r));
            return;
        }
        case TrainPhase::joint_shared: {
            const Tensor& ls = t.value(m.str->forward(t, x, false).logits);
            const Tensor& lt = t.value(m.ttr->forward(t, x, false).logits);
            for (std::int64_t r = 0; r < rows; ++r) {
                std::vector<double> a = detail::softmax_row_values(ls, r);
                const std::vector<double> b = detail::softmax_row_values(lt, r);
                for (std::size_t c = 0; c < a.size(); ++c) a[c] = 0.5 * (a[c] + b[c]);
                out.push_back(std::move(a));
            }
            return;
        }
        case TrainPhase::joint_fusion: {
            StreamOutput s = m.str->forward(t, x, false);
            StreamOutput u = m.ttr->forward(t, x, false);
            Val fused = fuse_embeddings(t, s.embedding, u.embedding);
            const Tensor& logits = t.value(m.head->forward(t, fused, false, 0));
            for (std::int64_t r = 0; r < rows; ++r) out.push_back(detail::softmax_row_values(logits, r));
            return;
        }
    }
    throw ValidationError("unknown training phase value");
}

inline EvalReport evaluate_bundle(ModelBundle& m, const TrainConfig& cfg, const ClipDataset& test) {
    if (test.size() == 0) throw ValidationError("cannot evaluate an empty test split");
    std::vector<std::vector<double>> scores;
    scores.reserve(static_cast<std::size_t>(test.size()));
    std::vector<std::int64_t> indices(static_cast<std::size_t>(test.size()));
    std::iota(indices.begin(), indices.end(), std::int64_t{0});
    for (std::int64_t start = 0; start < test.size(); start += cfg.test_batch) {
        const std::int64_t count = std::min(cfg.test_batch, test.size() - start);
        const std::vector<std::int64_t> batch_idx(indices.begin() + start, indices.begin() + start + count);
        append_batch_scores(scores, m, cfg, stack_batch(test, batch_idx));
    }
    return evaluate_rankings(scores, test.labels, cfg.num_classes);
}

// ------------------------------ training ------------------------------

struct EpochLogEntry {
    std::int64_t epoch = 0;
    TrainPhase phase = TrainPhase::str_only;
    double mean_loss = 0.0;
    double lr_multiplier = 1.0;
};

inline std::string format_epoch_log_line(const EpochLogEntry& e) {
    return std::to_string(e.epoch) + "\t" + train_phase_name(e.phase) + "\t" + jsonw::num(e.mean_loss) +
           "\t" + jsonw::num(e.lr_multiplier);
}

struct TrainResult {
    TrainConfig config;
    std::vector<EpochLogEntry> log;  // warm-start stages first, tagged with their own phase
    double first_batch_loss = 0.0;   // requested phase, epoch 0, batch 0
    EvalReport report;               // final-epoch model on the test split
    Checkpoint checkpoint;           // final-epoch model state + config JSON
};

// Optional explicit warm-start states for the joint phases, e.g. loaded from
// single-phase checkpoint files. When either is set, the internal warm-start
// pre-training is skipped.
struct WarmStart {
    const Checkpoint* str = nullptr;
    const Checkpoint* ttr = nullptr;
};

namespace detail {

inline void check_dataset(const ClipDataset& ds, const TrainConfig& cfg, const char* which) {
    if (ds.num_classes != cfg.num_classes)
        throw ValidationError(std::string(which) + " split has " + std::to_string(ds.num_classes) +
                              " classes but the config expects " + std::to_string(cfg.num_classes));
    if (ds.size() > 0 && ds.vertices != cfg.vertex_count())
        throw ValidationError(std::string(which) + " split has " + std::to_string(ds.vertices) +
                              " vertices but the config expects " + std::to_string(cfg.vertex_count()));
    if (ds.size() > 0 && ds.frames != cfg.target_frames)
        throw ValidationError(std::string(which) + " split has " + std::to_string(ds.frames) +
                              " frames but the config expects " + std::to_string(cfg.target_frames));
}

inline void check_train_batching(std::int64_t n, std::int64_t batch) {
    if (n == 0) throw ValidationError("cannot train on an empty train split");
    if (batch == 1 || n % batch == 1)
        throw ValidationError("batching " + std::to_string(n) + " clips at train_batch " +
                              std::to_string(batch) +
                              " would produce a batch of size 1, which batch normalization rejects in "
                              "training mode; adjust train_batch");
}

// Target number of momentum-0.1 running-statistics updates per normalization
// layer during the post-training refresh (see train_model).
constexpr std::int64_t kStatRefreshUpdates = 60;

inline std::vector<std::int64_t> epoch_order(std::int64_t n, std::uint64_t seed, std::int64_t epoch) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::int64_t{0});
    CounterRng rng = CounterRng::from(seed, "epoch-order", static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    return order;
}

}  // namespace detail

// The phase objective evaluated on the seeded first batch of a fresh,
// untrained bundle — the initialization sanity probe.
inline double initial_batch_loss(const ClipDataset& train_split, const TrainConfig& cfg) {
    cfg.validate();
    detail::check_dataset(train_split, cfg, "train");
    detail::check_train_batching(train_split.size(), cfg.train_batch);
    ModelBundle bundle = build_models(cfg);
    const std::vector<std::int64_t> order = detail::epoch_order(train_split.size(), cfg.seed, 0);
    const std::int64_t count = std::min(cfg.train_batch, train_split.size());
    const std::vector<std::int64_t> batch_idx(order.begin(), order.begin() + count);
    std::vector<std::int64_t> labels;
    labels.reserve(batch_idx.size());
    for (std::int64_t i : batch_idx) labels.push_back(train_split.labels[static_cast<std::size_t>(i)]);
    Tape t;
    const std::uint64_t dropout_key = derive_key({cfg.seed, fnv1a64("dropout"), 0, 0});
    Val loss =
        phase_training_loss(t, bundle, cfg, stack_batch(train_split, batch_idx), labels, true, dropout_key);
    return t.value(loss).item();
}

inline TrainResult train_model(const ClipDataset& train_split, const ClipDataset& test_split,
                               const TrainConfig& cfg, const WarmStart* init = nullptr) {
    cfg.validate();
    detail::check_dataset(train_split, cfg, "train");
    detail::check_dataset(test_split, cfg, "test");
    detail::check_train_batching(train_split.size(), cfg.train_batch);
    if (test_split.size() == 0) throw ValidationError("cannot evaluate an empty test split");

    TrainResult out;
    out.config = cfg;
    ModelBundle bundle = build_models(cfg);

    if (phase_is_joint(cfg.phase)) {
        const bool explicit_init = init != nullptr && (init->str != nullptr || init->ttr != nullptr);
        if (explicit_init) {
            if (init->str != nullptr) {
                StateDict state;
                bundle.str->collect_state(state);
                restore_state(*init->str, state, /*allow_extra=*/true);
            }
            if (init->ttr != nullptr) {
                StateDict state;
                bundle.ttr->collect_state(state);
                restore_state(*init->ttr, state, /*allow_extra=*/true);
            }
        } else if (cfg.warm_start) {
            for (TrainPhase stage : {TrainPhase::str_only, TrainPhase::ttr_only}) {
                TrainConfig sub = cfg;
                sub.phase = stage;
                sub.optimizer = preset_optimizer(stage);
                sub.loss_weights = preset_loss_weights(stage);
                sub.warm_start = false;
                TrainResult staged = train_model(train_split, test_split, sub, nullptr);
                out.log.insert(out.log.end(), staged.log.begin(), staged.log.end());
                StateDict state;
                if (stage == TrainPhase::str_only)
                    bundle.str->collect_state(state);
                else
                    bundle.ttr->collect_state(state);
                restore_state(staged.checkpoint, state);
            }
        }
    }

    Optimizer optimizer(cfg.optimizer, bundle.parameters());
    const std::int64_t n = train_split.size();
    bool first_recorded = false;
    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<std::int64_t> order = detail::epoch_order(n, cfg.seed, epoch);
        const double lr_multiplier = lr_schedule(epoch);
        double loss_sum = 0.0;
        std::int64_t batches = 0;
        for (std::int64_t start = 0; start < n; start += cfg.train_batch) {
            const std::int64_t count = std::min(cfg.train_batch, n - start);
            const std::vector<std::int64_t> batch_idx(order.begin() + start, order.begin() + start + count);
            std::vector<std::int64_t> labels;
            labels.reserve(batch_idx.size());
            for (std::int64_t i : batch_idx) labels.push_back(train_split.labels[static_cast<std::size_t>(i)]);
            Tape t;
            const std::uint64_t dropout_key = derive_key({cfg.seed, fnv1a64("dropout"),
                                                          static_cast<std::uint64_t>(epoch),
                                                          static_cast<std::uint64_t>(batches)});
            Val loss = phase_training_loss(t, bundle, cfg, stack_batch(train_split, batch_idx), labels, true,
                                           dropout_key);
            optimizer.zero_grad();
            t.backward(loss);
            optimizer.step(lr_multiplier);
            const double loss_value = t.value(loss).item();
            if (!std::isfinite(loss_value))
                throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(batches));
            if (!first_recorded) {
                out.first_batch_loss = loss_value;
                first_recorded = true;
            }
            loss_sum += loss_value;
            ++batches;
        }
        out.log.push_back(
            {epoch, cfg.phase, loss_sum / static_cast<double>(batches), lr_multiplier});
    }

    // Normalization-statistics refresh. The running averages are exponential
    // averages collected while the weights were still moving, so at the end of
    // training they lag the activation distribution the final weights actually
    // produce, and evaluation-mode accuracy suffers badly on short runs. With
    // the parameters frozen, forward passes over the training set in training
    // mode re-estimate every layer's statistics under the final weights; after
    // ~60 momentum-0.1 updates the stale share of the average is 0.9^60 < 0.2%.
    {
        const std::int64_t batches_per_pass = (n + cfg.train_batch - 1) / cfg.train_batch;
        const std::int64_t passes =
            (detail::kStatRefreshUpdates + batches_per_pass - 1) / batches_per_pass;
        for (std::int64_t pass = 0; pass < passes; ++pass) {
            std::int64_t batch = 0;
            for (std::int64_t start = 0; start < n; start += cfg.train_batch, ++batch) {
                const std::int64_t count = std::min(cfg.train_batch, n - start);
                std::vector<std::int64_t> batch_idx(static_cast<std::size_t>(count));
                std::iota(batch_idx.begin(), batch_idx.end(), start);
                std::vector<std::int64_t> labels;
                labels.reserve(batch_idx.size());
                for (std::int64_t i : batch_idx)
                    labels.push_back(train_split.labels[static_cast<std::size_t>(i)]);
                Tape t;
                const std::uint64_t dropout_key =
                    derive_key({cfg.seed, fnv1a64("stat-refresh"), static_cast<std::uint64_t>(pass),
                                static_cast<std::uint64_t>(batch)});
                phase_training_loss(t, bundle, cfg, stack_batch(train_split, batch_idx), labels, true,
                                    dropout_key);
            }
        }
    }

    out.report = evaluate_bundle(bundle, cfg, test_split);
    out.checkpoint = capture_checkpoint(train_config_json(cfg), bundle.state());
    return out;
}

}  // namespace skelid
