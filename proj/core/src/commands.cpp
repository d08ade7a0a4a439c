#include "srnn/commands.hpp"

#include "srnn/analysis.hpp"
#include "srnn/automata.hpp"
#include "srnn/checkpoint.hpp"
#include "srnn/extraction.hpp"
#include "srnn/formal_langs.hpp"
#include "srnn/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace srnn::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void ensure_out_dir(const std::string& dir) {
    if (dir.empty()) throw Error("an output directory (--out) is required");
    fs::create_directories(dir);
}

void write_manifest(const std::string& dir, ordered_json manifest) {
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!out) throw Error("cannot write manifest.json under " + dir);
    out << manifest.dump(2) << "\n";
}

ordered_json dataset_summary(const std::string& path, const Dataset& d) {
    ordered_json j;
    j["path"] = path;
    j["sequences"] = d.size();
    if (!d.seqs.empty() && d.seqs[0].targets.empty()) j["positives"] = d.positives();
    if (!d.warnings.empty()) j["warnings"] = d.warnings;
    return j;
}

std::string split_path(const std::string& dir, const char* name) {
    return (fs::path(dir) / name).string();
}

} // namespace

int cmd_gen(const GenOptions& opt) {
    ensure_out_dir(opt.out_dir);
    TaskKind task;
    if (!task_kind_from_name(opt.task, &task)) {
        throw Error("gen: unknown task '" + opt.task + "'");
    }

    ordered_json manifest;
    manifest["command"] = "gen";
    manifest["task"] = opt.task;
    manifest["seed"] = opt.seed;
    ordered_json splits = ordered_json::array();

    auto emit = [&](const char* name, const Dataset& d) {
        const std::string path = split_path(opt.out_dir, name);
        write_dataset(path, d);
        splits.push_back(dataset_summary(path, d));
        for (const auto& w : d.warnings) std::cerr << "warning: " << name << ": " << w << "\n";
    };

    switch (task) {
        case TaskKind::tomita: {
            manifest["grammar"] = opt.grammar;
            DatasetSpec spec;
            spec.task = task;
            spec.grammar = opt.grammar;
            spec.per_class_per_length = opt.per_class;
            spec.seed = opt.seed;
            spec.lengths = tomita_train_lengths();
            emit("train.txt", gen_tomita(spec));
            spec.lengths = tomita_valid_lengths();
            spec.per_class_per_length = std::max(1, opt.per_class / 2);
            spec.seed = Rng(opt.seed).derive(1).next_u64();
            emit("valid.txt", gen_tomita(spec));
            break;
        }
        case TaskKind::bp: {
            DatasetSpec spec;
            spec.task = task;
            spec.max_len = 100;
            int train_count = 1008, valid_count = 268, test_count = 1000;
            double train_pos = 601.0 / 1008.0, valid_pos = 142.0 / 268.0;
            if (opt.preset == "large") {
                train_count = 22286;
                valid_count = 6704;
                train_pos = 13025.0 / 22286.0;
                valid_pos = 3582.0 / 6704.0;
            } else if (!opt.preset.empty() && opt.preset != "small") {
                throw Error("gen: bp preset must be 'small' or 'large'");
            }
            if (opt.count > 0) train_count = opt.count;
            if (opt.pos_frac >= 0.0) train_pos = opt.pos_frac;
            manifest["preset"] = opt.preset.empty() ? "small" : opt.preset;

            spec.count = train_count;
            spec.positive_fraction = train_pos;
            spec.depth_lo = 1;
            spec.depth_hi = 5;
            spec.seed = opt.seed;
            emit("train.txt", gen_bp(spec));

            spec.count = valid_count;
            spec.positive_fraction = valid_pos;
            spec.depth_lo = 6;
            spec.depth_hi = 10;
            spec.seed = Rng(opt.seed).derive(1).next_u64();
            emit("valid.txt", gen_bp(spec));

            spec.count = test_count;
            spec.positive_fraction = 0.5;
            spec.depth_lo = 6;
            spec.depth_hi = 10;
            spec.seed = Rng(opt.seed).derive(2).next_u64();
            emit("test.txt", gen_bp(spec));
            break;
        }
        case TaskKind::palindrome: {
            DatasetSpec spec;
            spec.task = task;
            spec.count = opt.count > 0 ? opt.count : 10000;
            spec.positive_fraction = opt.pos_frac >= 0.0 ? opt.pos_frac : 0.5;
            spec.half_lo = 1;
            spec.half_hi = 25;
            spec.seed = opt.seed;
            emit("train.txt", gen_palindrome(spec));
            spec.half_lo = 26;
            spec.half_hi = 50;
            spec.count = std::max(1, spec.count / 5);
            spec.seed = Rng(opt.seed).derive(1).next_u64();
            emit("valid.txt", gen_palindrome(spec));
            spec.half_lo = 25;
            spec.half_hi = 250;
            spec.count = 1000;
            spec.seed = Rng(opt.seed).derive(2).next_u64();
            emit("test.txt", gen_palindrome(spec));
            break;
        }
        case TaskKind::copy_memory: {
            manifest["lag"] = opt.lag;
            manifest["span"] = opt.span;
            manifest["baseline_ce"] = copy_baseline_ce(opt.lag, opt.span);
            const int train_count = opt.count > 0 ? opt.count : 20000;
            Rng rng(opt.seed);
            emit("train.txt", gen_copy_memory(opt.lag, opt.span, train_count, rng));
            Rng vrng(Rng(opt.seed).derive(1).next_u64());
            emit("valid.txt", gen_copy_memory(opt.lag, opt.span, 2000, vrng));
            Rng trng(Rng(opt.seed).derive(2).next_u64());
            emit("test.txt", gen_copy_memory(opt.lag, opt.span, 2000, trng));
            break;
        }
    }

    manifest["splits"] = std::move(splits);
    write_manifest(opt.out_dir, std::move(manifest));
    return kOk;
}

namespace {

std::vector<TrainPhase> parse_curriculum(const std::string& text, int default_epochs) {
    std::vector<TrainPhase> phases;
    if (text.empty()) {
        phases.push_back(TrainPhase{0, default_epochs});
        return phases;
    }
    std::istringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const std::size_t colon = part.find(':');
        if (colon == std::string::npos) {
            throw Error("train: curriculum phase '" + part + "' must be cap:epochs");
        }
        TrainPhase phase;
        phase.cap = std::stoi(part.substr(0, colon));
        phase.max_epochs = std::stoi(part.substr(colon + 1));
        if (phase.max_epochs < 1) throw Error("train: phase epochs must be >= 1");
        phases.push_back(phase);
    }
    int prev = 0;
    for (std::size_t i = 0; i < phases.size(); ++i) {
        if (i > 0 && phases[i].cap > 0 && phases[i].cap < prev) {
            throw Error("train: curriculum caps must be non-decreasing");
        }
        prev = phases[i].cap;
    }
    return phases;
}

Dataset read_required(const std::string& path, const char* what) {
    if (path.empty()) throw Error(std::string("train: --") + what + " is required");
    if (!fs::exists(path)) throw Error(std::string(what) + " dataset not found: " + path);
    return read_dataset(path);
}

} // namespace

int cmd_train(const TrainOptions& opt) {
    ensure_out_dir(opt.out_dir);
    Dataset train_set = read_required(opt.train_path, "train");
    Dataset valid_set = read_required(opt.valid_path, "valid");
    if (train_set.alphabet != valid_set.alphabet) {
        throw Error("train: train/valid alphabet headers differ");
    }
    if (train_set.seqs.empty()) throw Error("train: empty training set");

    ModelConfig mc;
    if (!cell_kind_from_name(opt.cell, &mc.cell)) throw Error("train: unknown cell '" + opt.cell + "'");
    if (!similarity_from_name(opt.similarity, &mc.similarity)) {
        throw Error("train: unknown similarity '" + opt.similarity + "'");
    }
    mc.hidden = opt.hidden;
    mc.embed = opt.embed;
    mc.centroids = opt.centroids;
    mc.temperature = opt.tau;
    mc.state_regularized = opt.state_regularized;
    mc.alphabet = train_set.alphabet;
    const bool per_step = !train_set.seqs[0].targets.empty();
    mc.head = per_step ? HeadKind::per_step : HeadKind::binary;
    Model model = Model::init(mc, opt.seed);

    TrainConfig tc;
    tc.lr = opt.lr;
    tc.momentum = opt.momentum;
    tc.rho = opt.rho;
    tc.clip_norm = opt.clip;
    tc.batch = opt.batch;
    tc.patience = opt.patience;
    tc.stop_when_perfect = opt.stop_when_perfect;
    tc.seed = opt.seed;
    tc.threads = opt.threads;
    tc.phases = parse_curriculum(opt.curriculum, opt.epochs);

    std::vector<int> keys;
    if (opt.curriculum_key == "depth") {
        for (const auto& s : train_set.seqs) keys.push_back(bp_max_depth(train_set, s));
    } else if (opt.curriculum_key != "length") {
        throw Error("train: curriculum key must be 'length' or 'depth'");
    }

    TrainResult result = train(tc, model, train_set, valid_set, keys);
    write_history_csv(split_path(opt.out_dir, "history.csv"), result);

    ordered_json echo;
    echo["cell"] = opt.cell;
    echo["hidden"] = model.cfg.hidden;
    echo["embed"] = model.cfg.embed;
    echo["centroids"] = opt.centroids;
    echo["temperature"] = opt.tau;
    echo["similarity"] = opt.similarity;
    echo["state_regularized"] = opt.state_regularized;
    echo["lr"] = opt.lr;
    echo["momentum"] = opt.momentum;
    echo["rho"] = opt.rho;
    echo["clip"] = opt.clip;
    echo["batch"] = opt.batch;
    echo["epochs"] = opt.epochs;
    echo["patience"] = opt.patience;
    echo["curriculum"] = opt.curriculum;
    echo["curriculum_key"] = opt.curriculum_key;
    echo["stop_when_perfect"] = opt.stop_when_perfect;
    echo["threads"] = opt.threads;
    save_checkpoint(split_path(opt.out_dir, "checkpoint.json"), model, echo, opt.seed);

    const EvalResult train_eval = evaluate(model, train_set, opt.threads);
    const EvalResult valid_eval = evaluate(model, valid_set, opt.threads);

    ordered_json manifest;
    manifest["command"] = "train";
    manifest["seed"] = opt.seed;
    manifest["train"] = dataset_summary(opt.train_path, train_set);
    manifest["valid"] = dataset_summary(opt.valid_path, valid_set);
    manifest["config"] = echo;
    manifest["epochs_run"] = result.history.size();
    manifest["best_epoch"] = result.best_epoch;
    manifest["best_valid_err"] = result.best_valid_err;
    manifest["reached_perfect"] = result.reached_perfect;
    manifest["final_train_err"] = train_eval.error;
    manifest["final_valid_err"] = valid_eval.error;
    manifest["outputs"] = {split_path(opt.out_dir, "checkpoint.json"),
                           split_path(opt.out_dir, "history.csv")};
    write_manifest(opt.out_dir, std::move(manifest));

    std::cout << "trained " << result.history.size() << " epochs; train_err=" << train_eval.error
              << " valid_err=" << valid_eval.error << "\n";
    return kOk;
}

int cmd_extract(const ExtractOptions& opt) {
    ensure_out_dir(opt.out_dir);
    if (opt.data_paths.empty()) throw Error("extract: at least one dataset is required");
    LoadedCheckpoint loaded = load_checkpoint(opt.checkpoint_path);
    Model& model = loaded.model;

    Dataset merged;
    for (const auto& path : opt.data_paths) {
        Dataset d = read_dataset(path);
        if (merged.alphabet.empty()) {
            merged.alphabet = d.alphabet;
        } else if (merged.alphabet != d.alphabet) {
            throw Error("extract: dataset alphabets differ across files");
        }
        for (auto& s : d.seqs) merged.seqs.push_back(std::move(s));
    }
    if (merged.alphabet != model.cfg.alphabet) {
        throw Error("extract: dataset alphabet does not match the checkpoint vocabulary");
    }

    ExtractionResult ext = extract_dfa(model, merged, opt.jobs);
    const Dfa minimized = minimize(ext.dfa);

    write_counts_csv(split_path(opt.out_dir, "counts.csv"), ext.counts, merged.alphabet);
    {
        std::ofstream out(split_path(opt.out_dir, "dfa.dot"), std::ios::binary);
        out << to_dot(ext.raw, ext.state_labels);
    }
    {
        std::ofstream out(split_path(opt.out_dir, "dfa_min.dot"), std::ios::binary);
        out << to_dot(minimized);
    }

    ordered_json manifest;
    manifest["command"] = "extract";
    manifest["checkpoint"] = opt.checkpoint_path;
    manifest["datasets"] = opt.data_paths;
    manifest["start_centroid"] = ext.counts.start_state;
    manifest["states_raw"] = ext.raw.num_states();
    manifest["states_min"] = minimized.num_states();

    int exit_code = kOk;
    std::ostringstream report;
    report << "states(raw)=" << ext.raw.num_states() << "\n";
    report << "states(min)=" << minimized.num_states() << "\n";
    if (!opt.ground_truth.empty()) {
        if (opt.ground_truth.rfind("tomita", 0) != 0 || opt.ground_truth.size() != 7) {
            throw Error("extract: ground truth must be tomita1..tomita7");
        }
        const int grammar = opt.ground_truth[6] - '0';
        const Dfa truth = tomita_dfa(grammar);
        const Dfa truth_min = minimize(truth);
        const EquivalenceResult eq = equivalent(minimized, truth);
        report << "ground_truth=" << opt.ground_truth << "\n";
        report << "equivalent: " << (eq.equivalent ? "true" : "false")
               << ", states(min)=" << minimized.num_states() << "\n";
        report << "states(ground_truth_min)=" << truth_min.num_states() << "\n";
        manifest["equivalent"] = eq.equivalent;
        manifest["states_ground_truth_min"] = truth_min.num_states();
        if (!eq.equivalent) {
            std::string ce;
            for (int tok : *eq.counterexample) ce += merged.alphabet[static_cast<std::size_t>(tok)];
            report << "counterexample=\"" << ce << "\"\n";
            manifest["counterexample"] = ce;
            exit_code = kGateFailure;
        }
    }
    {
        std::ofstream out(split_path(opt.out_dir, "report.txt"), std::ios::binary);
        out << report.str();
    }
    manifest["outputs"] = {split_path(opt.out_dir, "dfa.dot"), split_path(opt.out_dir, "dfa_min.dot"),
                           split_path(opt.out_dir, "counts.csv"),
                           split_path(opt.out_dir, "report.txt")};
    write_manifest(opt.out_dir, std::move(manifest));
    std::cout << report.str();
    return exit_code;
}

int cmd_inspect(const InspectOptions& opt) {
    ensure_out_dir(opt.out_dir);
    LoadedCheckpoint loaded = load_checkpoint(opt.checkpoint_path);
    Model& model = loaded.model;
    Dataset data = read_dataset(opt.data_path);
    if (data.seqs.empty()) throw Error("inspect: empty dataset");
    if (data.alphabet != model.cfg.alphabet) {
        throw Error("inspect: dataset alphabet does not match the checkpoint vocabulary");
    }

    const auto prototypes = token_prototypes(model, data, opt.top_n);
    write_prototypes_csv(split_path(opt.out_dir, "prototypes.csv"), prototypes);
    const auto profile = ranked_alpha_profile(model, data);
    write_ranked_profile_csv(split_path(opt.out_dir, "ranked_profile.csv"), profile);

    ordered_json manifest;
    manifest["command"] = "inspect";
    manifest["checkpoint"] = opt.checkpoint_path;
    manifest["dataset"] = dataset_summary(opt.data_path, data);
    manifest["top_n"] = opt.top_n;
    std::vector<std::string> outputs = {split_path(opt.out_dir, "prototypes.csv"),
                                        split_path(opt.out_dir, "ranked_profile.csv")};

    if (!opt.trace.empty()) {
        std::istringstream ss(opt.trace);
        std::string tok;
        std::vector<int> tokens;
        while (ss >> tok) {
            int id = -1;
            for (std::size_t i = 0; i < data.alphabet.size(); ++i) {
                if (data.alphabet[i] == tok) {
                    id = static_cast<int>(i);
                    break;
                }
            }
            if (id < 0) throw Error("inspect: trace token '" + tok + "' not in the alphabet");
            tokens.push_back(id);
        }
        write_trace_csv(split_path(opt.out_dir, "trace.csv"), state_trace(model, tokens));
        outputs.push_back(split_path(opt.out_dir, "trace.csv"));
        manifest["trace_tokens"] = tokens.size();
    }
    manifest["outputs"] = outputs;
    write_manifest(opt.out_dir, std::move(manifest));
    return kOk;
}

int cmd_gradcheck(const GradcheckOptions& opt) {
    CellKind kind;
    if (!cell_kind_from_name(opt.cell, &kind)) {
        throw Error("gradcheck: unknown cell '" + opt.cell + "'");
    }
    Similarity sim;
    if (!similarity_from_name(opt.similarity, &sim)) {
        throw Error("gradcheck: unknown similarity '" + opt.similarity + "'");
    }

    ModelConfig cfg;
    cfg.cell = kind;
    cfg.hidden = opt.hidden;
    cfg.embed = opt.hidden;
    cfg.centroids = opt.centroids;
    cfg.similarity = sim;
    cfg.alphabet = {"0", "1"};
    Model model = Model::init(cfg, opt.seed);

    Rng rng(opt.seed + 1);
    std::vector<int> tokens;
    for (int i = 0; i < opt.seq_len; ++i) tokens.push_back(rng.uniform_int(2));
    const int label = rng.uniform_int(2);

    auto closure = [&](bool want_grad) {
        Tape t;
        SequenceRun run = run_sequence(t, model, tokens);
        Tensor loss = t.sum(t.cross_entropy_logits(run.logits, std::vector<int>{label}));
        const double v = loss.scalar();
        if (want_grad) {
            t.backward(loss);
            // test fixture: corrupt one analytic gradient entry on request
            if (opt.inject_bug != 0.0) model.centroids.matrix.grad.v[0] += opt.inject_bug;
        }
        return v;
    };
    std::vector<Parameter*> params = model.parameters();
    const GradCheckReport report = check_gradients(closure, params, opt.eps);

    std::cout << "cell=" << opt.cell << " similarity=" << opt.similarity
              << " max_rel_err=" << report.max_rel_err << " worst=" << report.worst_param << "["
              << report.worst_index << "]\n";
    return report.max_rel_err < opt.threshold ? kOk : kGateFailure;
}

} // namespace srnn::cli
