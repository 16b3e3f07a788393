// Command-line front end: synthesize identity corpora, train and evaluate
// the two-stream models, and verify every backward rule.
//
// Exit codes: 0 success, 1 validation error, 2 numeric-check failure,
// 3 I/O error.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "skelid/checkpoint.hpp"
#include "skelid/eval.hpp"
#include "skelid/gradcheck_suite.hpp"
#include "skelid/json_write.hpp"
#include "skelid/keypoint_io.hpp"
#include "skelid/synthetic.hpp"
#include "skelid/train.hpp"

namespace fs = std::filesystem;
using namespace skelid;

namespace {

constexpr const char* kOutDirEnvVar = "SKELID_OUT_DIR";

void print_usage(std::ostream& os) {
    os << "usage: skelid <command> [flags]\n"
          "\n"
          "commands:\n"
          "  synth       generate a synthetic identity corpus\n"
          "    --identities N (8)   --clips N (50)    --frames N (60)\n"
          "    --mode M (mixed: spatial-only | temporal-only | mixed)\n"
          "    --noise S (0.02)     --preset P (body17)   --seed N (1)\n"
          "    --out DIR ($" << kOutDirEnvVar << ")   --force (write into a non-empty directory)\n"
          "\n"
          "  train       train a model:  train --phase P [flags] <corpus-dir>\n"
          "    --phase P   str-only | ttr-only | joint-shared | joint-fusion (required)\n"
          "    --epochs N (120)   --train-batch N (32)   --test-batch N (8)\n"
          "    --lr X  --weight-decay X        (phase preset defaults)\n"
          "    --heads N  --dk-ratio X  --dv-ratio X  (applied to both streams)\n"
          "    --warm-start 0|1 (1)   --init from:a.ckpt[,b.ckpt]  (joint phases)\n"
          "    --seed N (1)   --out DIR ($" << kOutDirEnvVar << " or .)\n"
          "\n"
          "  eval        evaluate a checkpoint on a corpus test split:\n"
          "              eval --checkpoint FILE [--phase P] [--out DIR] <corpus-dir>\n"
          "\n"
          "  gradcheck   verify every backward rule against central differences\n"
          "\n"
          "exit codes: 0 success, 1 validation error, 2 numeric-check failure, 3 I/O error\n";
}

// ----------------------------- flag parsing -----------------------------

struct ParsedArgs {
    std::string command;
    std::vector<std::string> positional;
    std::map<std::string, std::string> values;
    std::set<std::string> switches;
    std::vector<std::string> echo;  // the invocation tail, verbatim, for the manifest
};

ParsedArgs parse_args(int argc, char** argv, const std::set<std::string>& value_flags,
                      const std::set<std::string>& switch_flags) {
    ParsedArgs out;
    out.command = argv[1];
    for (int i = 1; i < argc; ++i) out.echo.emplace_back(argv[i]);
    for (int i = 2; i < argc; ++i) {
        std::string tok = argv[i];
        if (tok.rfind("--", 0) != 0) {
            out.positional.push_back(std::move(tok));
            continue;
        }
        std::string name = tok;
        std::optional<std::string> inline_value;
        const std::size_t eq = tok.find('=');
        if (eq != std::string::npos) {
            name = tok.substr(0, eq);
            inline_value = tok.substr(eq + 1);
        }
        if (switch_flags.count(name)) {
            if (inline_value)
                throw ValidationError("flag " + name + " does not take a value");
            out.switches.insert(name);
            continue;
        }
        if (!value_flags.count(name))
            throw ValidationError("unknown flag " + name + " for command \"" + out.command + "\"");
        std::string value;
        if (inline_value) {
            value = *inline_value;
        } else {
            if (i + 1 >= argc)
                throw ValidationError("flag " + name + " expects a value");
            value = argv[++i];
        }
        if (!out.values.emplace(name, value).second)
            throw ValidationError("flag " + name + " given twice");
    }
    return out;
}

std::string need_str(const ParsedArgs& args, const std::string& flag, const std::string& why) {
    auto it = args.values.find(flag);
    if (it == args.values.end())
        throw ValidationError(args.command + " requires " + flag + " (" + why + ")");
    return it->second;
}

std::string get_str(const ParsedArgs& args, const std::string& flag, const std::string& fallback) {
    auto it = args.values.find(flag);
    return it == args.values.end() ? fallback : it->second;
}

std::int64_t get_int(const ParsedArgs& args, const std::string& flag, std::int64_t fallback) {
    auto it = args.values.find(flag);
    if (it == args.values.end()) return fallback;
    std::int64_t v = 0;
    const std::string& s = it->second;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ValidationError("flag " + flag + " expects an integer, got \"" + s + "\"");
    return v;
}

double get_num(const ParsedArgs& args, const std::string& flag, double fallback) {
    auto it = args.values.find(flag);
    if (it == args.values.end()) return fallback;
    bool ok = false;
    const double v = parse_double(it->second, ok);
    if (!ok) throw ValidationError("flag " + flag + " expects a number, got \"" + it->second + "\"");
    return v;
}

std::uint64_t get_seed(const ParsedArgs& args, std::uint64_t fallback) {
    const std::int64_t v = get_int(args, "--seed", static_cast<std::int64_t>(fallback));
    if (v < 0) throw ValidationError("flag --seed expects a non-negative integer");
    return static_cast<std::uint64_t>(v);
}

// ----------------------------- run manifests -----------------------------

// UTC wall-clock timestamp; SOURCE_DATE_EPOCH (seconds) overrides it so runs
// can be made byte-reproducible.
std::string manifest_timestamp() {
    std::time_t when = std::time(nullptr);
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env != nullptr && *env != '\0') {
        std::int64_t v = 0;
        const std::string s(env);
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw ValidationError("SOURCE_DATE_EPOCH must be an integer count of seconds, got \"" + s +
                                  "\"");
        when = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&when, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string checksum_of_file(const fs::path& path) {
    const std::uint64_t h = fnv1a64(read_file_bytes(path.string()));
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct ManifestInfo {
    std::string command;
    std::vector<std::string> argv;
    std::uint64_t seed = 0;
    std::string config_json;  // pre-rendered JSON object
    std::vector<std::pair<std::string, std::string>> inputs;     // role -> path
    std::vector<std::pair<std::string, std::string>> outputs;    // role -> path
    std::vector<std::pair<std::string, std::string>> checksums;  // artifact file name -> checksum
};

std::string render_manifest(const ManifestInfo& m) {
    auto path_block = [](const std::vector<std::pair<std::string, std::string>>& entries) {
        if (entries.empty()) return std::string("{}");
        std::string out = "{\n";
        for (std::size_t i = 0; i < entries.size(); ++i) {
            out += "    " + jsonw::str(entries[i].first) + ": " + jsonw::str(entries[i].second);
            out += i + 1 < entries.size() ? ",\n" : "\n";
        }
        return out + "  }";
    };
    std::string config = m.config_json;
    while (!config.empty() && (config.back() == '\n' || config.back() == ' ')) config.pop_back();

    std::string out = "{\n";
    out += "  \"kind\": \"run-manifest\",\n";
    out += "  \"command\": " + jsonw::str(m.command) + ",\n";
    out += "  \"argv\": " + jsonw::str_array(m.argv) + ",\n";
    out += "  \"timestamp\": " + jsonw::str(manifest_timestamp()) + ",\n";
    out += "  \"seed\": " + jsonw::num(m.seed) + ",\n";
    out += "  \"config\": " + (config.empty() ? "null" : config) + ",\n";
    out += "  \"inputs\": " + path_block(m.inputs) + ",\n";
    out += "  \"outputs\": " + path_block(m.outputs) + ",\n";
    out += "  \"artifact_checksums\": " + path_block(m.checksums) + "\n";
    out += "}\n";
    return out;
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory \"" + dir.string() + "\": " + ec.message());
    if (!fs::is_directory(dir))
        throw IoError("\"" + dir.string() + "\" exists but is not a directory");
}

fs::path resolve_out_dir(const ParsedArgs& args, bool required) {
    if (auto it = args.values.find("--out"); it != args.values.end()) return it->second;
    if (const char* env = std::getenv(kOutDirEnvVar); env != nullptr && *env != '\0') return env;
    if (required)
        throw ValidationError(args.command + " needs an output directory: pass --out or set $" +
                              kOutDirEnvVar);
    return ".";
}

// ----------------------------- corpus loading -----------------------------

struct LoadedCorpus {
    CorpusMeta meta;
    CorpusBundle bundle;
};

LoadedCorpus load_corpus_dir(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw ValidationError("corpus directory \"" + dir.string() + "\" does not exist");
    LoadedCorpus out;
    out.meta = parse_corpus_meta(read_file_bytes((dir / "corpus.meta").string()));
    out.bundle.labels = LabelMap::parse(read_file_bytes((dir / "labels.map").string()));
    out.bundle.split = read_split_file((dir / "split.manifest").string());
    auto load_side = [&](const std::vector<std::string>& ids) {
        for (const std::string& id : ids) {
            ClipRecord rec = read_clip_file((dir / (id + ".keypoints")).string());
            if (rec.clip_id != id)
                throw SchemaError("clip file \"" + id + ".keypoints\" declares clip_id \"" +
                                  rec.clip_id + "\"");
            out.bundle.clips.push_back(to_labeled(rec, out.bundle.labels));
        }
    };
    load_side(out.bundle.split.train);
    load_side(out.bundle.split.test);
    return out;
}

// ----------------------------- synth -----------------------------

int cmd_synth(const ParsedArgs& args) {
    if (!args.positional.empty())
        throw ValidationError("synth takes no positional arguments (use --out for the destination)");

    CorpusSpec spec;
    spec.identity_count = get_int(args, "--identities", spec.identity_count);
    spec.clips_per_identity = get_int(args, "--clips", spec.clips_per_identity);
    spec.frames_per_clip = get_int(args, "--frames", spec.frames_per_clip);
    spec.mode = parse_corpus_mode(get_str(args, "--mode", corpus_mode_name(spec.mode)));
    spec.noise_sigma = get_num(args, "--noise", spec.noise_sigma);
    spec.seed = get_seed(args, spec.seed);
    spec.preset = get_str(args, "--preset", spec.preset);
    spec.vertex_count = skeleton_preset(spec.preset).vertex_count;
    spec.validate();

    const fs::path out_dir = resolve_out_dir(args, /*required=*/true);
    ensure_directory(out_dir);
    if (!fs::is_empty(out_dir) && !args.switches.count("--force"))
        throw ValidationError("output directory \"" + out_dir.string() +
                              "\" is not empty; pass --force to write into it anyway");

    const CorpusBundle corpus = generate_corpus(spec);

    ManifestInfo manifest;
    manifest.command = "synth";
    manifest.argv = args.echo;
    manifest.seed = spec.seed;
    manifest.config_json = corpus_meta_json(spec);
    manifest.outputs = {{"corpus", out_dir.string()}};
    const fs::path manifest_path = out_dir / "synth.manifest";
    atomic_write_file(manifest_path.string(), render_manifest(manifest));

    std::vector<std::string> artifacts = {"corpus.meta", "labels.map", "split.manifest"};
    atomic_write_file((out_dir / "corpus.meta").string(), corpus_meta_json(spec));
    atomic_write_file((out_dir / "labels.map").string(), corpus.labels.serialize());
    write_split_file((out_dir / "split.manifest").string(), corpus.split);
    for (const LabeledSequence& clip : corpus.clips) {
        ClipRecord rec;
        rec.clip_id = clip.clip_id;
        rec.identity_label = corpus.labels.label(clip.identity);
        rec.sequence = clip.sequence;
        const std::string file = clip.clip_id + ".keypoints";
        write_clip_file((out_dir / file).string(), rec);
        artifacts.push_back(file);
    }

    std::sort(artifacts.begin(), artifacts.end());
    for (const std::string& file : artifacts)
        manifest.checksums.emplace_back(file, checksum_of_file(out_dir / file));
    atomic_write_file(manifest_path.string(), render_manifest(manifest));

    std::cout << "wrote " << corpus.clips.size() << " clips (" << spec.identity_count
              << " identities x " << spec.clips_per_identity << ", mode "
              << corpus_mode_name(spec.mode) << ") to " << out_dir.string() << "\n";
    return 0;
}

// ----------------------------- train -----------------------------

int cmd_train(const ParsedArgs& args) {
    if (args.positional.size() != 1)
        throw ValidationError("train expects exactly one corpus directory, got " +
                              std::to_string(args.positional.size()));
    const TrainPhase phase = parse_train_phase(
        need_str(args, "--phase", "str-only, ttr-only, joint-shared, or joint-fusion"));

    const fs::path corpus_dir = args.positional.front();
    const LoadedCorpus corpus = load_corpus_dir(corpus_dir);

    TrainConfig cfg = default_train_config(phase, corpus.bundle.labels.size(), corpus.meta.spec.preset);
    cfg.frame_skip = corpus.meta.frame_skip;
    cfg.seed = get_seed(args, cfg.seed);
    cfg.epochs = get_int(args, "--epochs", cfg.epochs);
    cfg.train_batch = get_int(args, "--train-batch", cfg.train_batch);
    cfg.test_batch = get_int(args, "--test-batch", cfg.test_batch);
    cfg.optimizer.learning_rate = get_num(args, "--lr", cfg.optimizer.learning_rate);
    cfg.optimizer.weight_decay = get_num(args, "--weight-decay", cfg.optimizer.weight_decay);
    cfg.warm_start = get_int(args, "--warm-start", cfg.warm_start ? 1 : 0) != 0;
    for (StreamConfig* stream : {&cfg.str_stream, &cfg.ttr_stream}) {
        stream->heads = get_int(args, "--heads", stream->heads);
        stream->dk_ratio = get_num(args, "--dk-ratio", stream->dk_ratio);
        stream->dv_ratio = get_num(args, "--dv-ratio", stream->dv_ratio);
    }
    cfg.validate();

    // Explicit warm-start checkpoints: --init from:a.ckpt[,b.ckpt]. Each file
    // must come from a single-stream phase; it seeds the matching stream.
    std::vector<Checkpoint> init_checkpoints;
    std::vector<std::string> init_paths;
    WarmStart warm;
    const WarmStart* init = nullptr;
    if (auto it = args.values.find("--init"); it != args.values.end()) {
        if (!phase_is_joint(phase))
            throw ValidationError("--init applies only to the joint phases, not " +
                                  std::string(train_phase_name(phase)));
        const std::string& value = it->second;
        if (value.rfind("from:", 0) != 0)
            throw ValidationError("--init expects from:<checkpoint>[,<checkpoint>], got \"" + value +
                                  "\"");
        std::string rest = value.substr(5);
        std::size_t pos = 0;
        while (pos <= rest.size()) {
            const std::size_t comma = std::min(rest.find(',', pos), rest.size());
            const std::string path = rest.substr(pos, comma - pos);
            pos = comma + 1;
            if (path.empty())
                throw ValidationError("--init expects from:<checkpoint>[,<checkpoint>], got \"" +
                                      value + "\"");
            init_paths.push_back(path);
        }
        init_checkpoints.reserve(init_paths.size());
        for (const std::string& path : init_paths) {
            init_checkpoints.push_back(load_checkpoint_file(path));
            const TrainConfig from = parse_train_config_json(init_checkpoints.back().config_json);
            const Checkpoint* slot = &init_checkpoints.back();
            if (from.phase == TrainPhase::str_only) {
                if (warm.str)
                    throw ValidationError("--init lists two spatial-stream checkpoints");
                warm.str = slot;
            } else if (from.phase == TrainPhase::ttr_only) {
                if (warm.ttr)
                    throw ValidationError("--init lists two temporal-stream checkpoints");
                warm.ttr = slot;
            } else {
                throw ValidationError("--init checkpoints must come from the single-stream phases; \"" +
                                      path + "\" was trained with " +
                                      train_phase_name(from.phase));
            }
        }
        init = &warm;
    }

    const fs::path out_dir = resolve_out_dir(args, /*required=*/false);
    ensure_directory(out_dir);
    const std::string stem = train_phase_name(phase);
    const fs::path ckpt_path = out_dir / (stem + ".ckpt");
    const fs::path log_path = out_dir / (stem + ".trainlog");
    const fs::path report_path = out_dir / (stem + ".report");
    const fs::path manifest_path = out_dir / "train.manifest";

    ManifestInfo manifest;
    manifest.command = "train";
    manifest.argv = args.echo;
    manifest.seed = cfg.seed;
    manifest.config_json = train_config_json(cfg);
    manifest.inputs = {{"corpus", corpus_dir.string()}};
    for (std::size_t i = 0; i < init_paths.size(); ++i)
        manifest.inputs.emplace_back("init_checkpoint_" + std::to_string(i), init_paths[i]);
    manifest.outputs = {{"checkpoint", ckpt_path.string()},
                        {"epoch_log", log_path.string()},
                        {"report", report_path.string()}};
    atomic_write_file(manifest_path.string(), render_manifest(manifest));

    const ClipDataset train_split =
        select_split(corpus.bundle, corpus.bundle.split.train, cfg.target_frames, cfg.frame_skip);
    const ClipDataset test_split =
        select_split(corpus.bundle, corpus.bundle.split.test, cfg.target_frames, cfg.frame_skip);

    const TrainResult result = train_model(train_split, test_split, cfg, init);

    std::string log_text;
    for (const EpochLogEntry& entry : result.log) log_text += format_epoch_log_line(entry) + "\n";
    save_checkpoint_file(ckpt_path.string(), result.checkpoint);
    atomic_write_file(log_path.string(), log_text);
    atomic_write_file(report_path.string(), serialize_eval_report(result.report));

    for (const fs::path& artifact : {ckpt_path, log_path, report_path})
        manifest.checksums.emplace_back(artifact.filename().string(), checksum_of_file(artifact));
    atomic_write_file(manifest_path.string(), render_manifest(manifest));

    std::cout << log_text;
    std::cout << "accuracy\t" << jsonw::num(result.report.accuracy) << "\n";
    std::cout << "mean_average_precision\t" << jsonw::num(result.report.mean_average_precision)
              << "\n";
    std::cout << "checkpoint\t" << ckpt_path.string() << "\n";
    return 0;
}

// ----------------------------- eval -----------------------------

int cmd_eval(const ParsedArgs& args) {
    if (args.positional.size() != 1)
        throw ValidationError("eval expects exactly one corpus directory, got " +
                              std::to_string(args.positional.size()));
    const std::string ckpt_file = need_str(args, "--checkpoint", "the model to evaluate");
    const Checkpoint ckpt = load_checkpoint_file(ckpt_file);
    const TrainConfig cfg = parse_train_config_json(ckpt.config_json);

    if (auto it = args.values.find("--phase"); it != args.values.end()) {
        const TrainPhase asked = parse_train_phase(it->second);
        if (asked != cfg.phase)
            throw ValidationError("checkpoint \"" + ckpt_file + "\" was trained with phase " +
                                  train_phase_name(cfg.phase) + " but --phase requests " +
                                  train_phase_name(asked));
    }

    const fs::path corpus_dir = args.positional.front();
    const LoadedCorpus corpus = load_corpus_dir(corpus_dir);
    if (corpus.bundle.labels.size() != cfg.num_classes)
        throw ValidationError("checkpoint expects " + std::to_string(cfg.num_classes) +
                              " identities but the corpus has " +
                              std::to_string(corpus.bundle.labels.size()));
    if (corpus.meta.spec.preset != cfg.preset)
        throw ValidationError("checkpoint uses skeleton preset \"" + cfg.preset +
                              "\" but the corpus uses \"" + corpus.meta.spec.preset + "\"");

    ModelBundle bundle = build_models(cfg);
    StateDict state = bundle.state();
    restore_state(ckpt, state);

    const fs::path out_dir = resolve_out_dir(args, /*required=*/false);
    ensure_directory(out_dir);
    const std::string stem = train_phase_name(cfg.phase);
    const fs::path report_path = out_dir / (stem + ".eval.report");
    const fs::path manifest_path = out_dir / "eval.manifest";

    ManifestInfo manifest;
    manifest.command = "eval";
    manifest.argv = args.echo;
    manifest.seed = cfg.seed;
    manifest.config_json = train_config_json(cfg);
    manifest.inputs = {{"checkpoint", ckpt_file}, {"corpus", corpus_dir.string()}};
    manifest.outputs = {{"report", report_path.string()}};
    atomic_write_file(manifest_path.string(), render_manifest(manifest));

    const ClipDataset test_split =
        select_split(corpus.bundle, corpus.bundle.split.test, cfg.target_frames, cfg.frame_skip);
    const EvalReport report = evaluate_bundle(bundle, cfg, test_split);

    atomic_write_file(report_path.string(), serialize_eval_report(report));
    manifest.checksums.emplace_back(report_path.filename().string(), checksum_of_file(report_path));
    atomic_write_file(manifest_path.string(), render_manifest(manifest));

    std::cout << "accuracy\t" << jsonw::num(report.accuracy) << "\n";
    std::cout << "mean_average_precision\t" << jsonw::num(report.mean_average_precision) << "\n";
    std::cout << "report\t" << report_path.string() << "\n";
    return 0;
}

// ----------------------------- gradcheck -----------------------------

int cmd_gradcheck(const ParsedArgs& args) {
    if (!args.positional.empty())
        throw ValidationError("gradcheck takes no positional arguments");
    const bool inject = args.switches.count("--inject-broken-backward") != 0;
    const std::vector<GradCheckRow> rows = run_gradcheck_suite(inject);

    std::printf("%-44s  %12s  %9s  %s\n", "rule", "max rel err", "tolerance", "result");
    int failed = 0;
    for (const GradCheckRow& row : rows) {
        std::printf("%-44s  %12.3e  %9.0e  %s\n", row.name.c_str(), row.max_rel_err, row.tolerance,
                    row.pass ? "PASS" : "FAIL");
        if (!row.pass) ++failed;
    }
    if (failed > 0) {
        std::printf("%d of %zu rules FAILED the finite-difference check\n", failed, rows.size());
        return 2;
    }
    std::printf("all %zu rules match central differences\n", rows.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        if (argc < 2) {
            print_usage(std::cerr);
            return 1;
        }
        const std::string command = argv[1];
        if (command == "help" || command == "--help" || command == "-h") {
            print_usage(std::cout);
            return 0;
        }
        if (command == "synth") {
            return cmd_synth(parse_args(argc, argv,
                                        {"--identities", "--clips", "--frames", "--mode", "--noise",
                                         "--seed", "--preset", "--out"},
                                        {"--force"}));
        }
        if (command == "train") {
            return cmd_train(parse_args(argc, argv,
                                        {"--phase", "--epochs", "--train-batch", "--test-batch",
                                         "--lr", "--weight-decay", "--heads", "--dk-ratio",
                                         "--dv-ratio", "--warm-start", "--init", "--seed", "--out"},
                                        {}));
        }
        if (command == "eval") {
            return cmd_eval(parse_args(argc, argv, {"--checkpoint", "--phase", "--out"}, {}));
        }
        if (command == "gradcheck") {
            return cmd_gradcheck(parse_args(argc, argv, {}, {"--inject-broken-backward"}));
        }
        std::cerr << "unknown command \"" << command << "\"\n\n";
        print_usage(std::cerr);
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
