#include "srnn/commands.hpp"
#include "srnn/tensor.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

namespace {

// --seed wins; SRNN_SEED is the fallback; default 0.
std::uint64_t seed_fallback() {
    const char* env = std::getenv("SRNN_SEED");
    if (env == nullptr) return 0;
    try {
        return std::stoull(env);
    } catch (...) {
        throw srnn::Error("SRNN_SEED is not an unsigned integer");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"state-regularized recurrent networks: training, DFA extraction, analysis"};
    app.require_subcommand(1);

    srnn::cli::GenOptions gen;
    bool gen_small = false, gen_large = false;
    CLI::App* cgen = app.add_subcommand("gen", "generate train/valid/test dataset files");
    cgen->add_option("--task", gen.task, "tomita | bp | palindrome | copy")->required();
    cgen->add_option("--out", gen.out_dir, "output directory")->required();
    auto* gen_seed = cgen->add_option("--seed", gen.seed, "rng seed (SRNN_SEED fallback)");
    cgen->add_option("--grammar", gen.grammar, "tomita grammar 1..7");
    cgen->add_option("--per-class", gen.per_class, "tomita: per length/class sampling cap");
    cgen->add_flag("--small", gen_small, "bp: paper-style small dataset sizes (default)");
    cgen->add_flag("--large", gen_large, "bp: paper-style large dataset sizes");
    cgen->add_option("--count", gen.count, "training sequence count override");
    cgen->add_option("--pos-frac", gen.pos_frac, "positive fraction override");
    cgen->add_option("--lag", gen.lag, "copy: time lag T");
    cgen->add_option("--span", gen.span, "copy: symbols to memorize");
    cgen->add_option("--jobs", gen.jobs, "worker threads");

    srnn::cli::TrainOptions train;
    CLI::App* ctrain = app.add_subcommand("train", "train a state-regularized RNN");
    ctrain->add_option("--train", train.train_path, "training dataset file")->required();
    ctrain->add_option("--valid", train.valid_path, "validation dataset file")->required();
    ctrain->add_option("--out", train.out_dir, "output directory")->required();
    ctrain->add_option("--cell", train.cell, "gru | lstm | lstm-p");
    ctrain->add_option("--hidden", train.hidden, "hidden units d");
    ctrain->add_option("--embed", train.embed, "embedding size (0: same as hidden)");
    ctrain->add_option("--centroids", train.centroids, "centroid count k");
    ctrain->add_option("--tau", train.tau, "softmax temperature");
    ctrain->add_option("--similarity", train.similarity, "dot | euclidean");
    ctrain->add_option("--lr", train.lr, "learning rate");
    ctrain->add_option("--momentum", train.momentum, "momentum");
    ctrain->add_option("--rho", train.rho, "squared-gradient decay");
    ctrain->add_option("--clip", train.clip, "gradient L2 clip (0: off)");
    ctrain->add_option("--batch", train.batch, "mini-batch size");
    ctrain->add_option("--epochs", train.epochs, "epoch cap (single-phase runs)");
    ctrain->add_option("--patience", train.patience, "early-stop patience (0: off)");
    ctrain->add_option("--curriculum", train.curriculum, "phases as cap:epochs,cap:epochs");
    ctrain->add_option("--curriculum-key", train.curriculum_key, "length | depth");
    ctrain->add_flag("--stop-when-perfect", train.stop_when_perfect,
                     "stop when train and valid error reach 0");
    ctrain->add_flag("--no-state-reg{false}", train.state_regularized,
                     "train a plain RNN baseline without the stochastic component");
    auto* train_seed = ctrain->add_option("--seed", train.seed, "rng seed (SRNN_SEED fallback)");
    ctrain->add_option("--threads", train.threads, "worker threads (0: hardware)");

    srnn::cli::ExtractOptions extract;
    CLI::App* cextract = app.add_subcommand("extract", "extract and minimize the transition DFA");
    cextract->add_option("--checkpoint", extract.checkpoint_path, "trained checkpoint")->required();
    cextract->add_option("--data", extract.data_paths, "trace dataset files")->required();
    cextract->add_option("--out", extract.out_dir, "output directory")->required();
    cextract->add_option("--ground-truth", extract.ground_truth, "tomita1..tomita7");
    cextract->add_option("--jobs", extract.jobs, "worker threads for trace collection");

    srnn::cli::InspectOptions inspect;
    CLI::App* cinspect = app.add_subcommand("inspect", "export interpretability tables");
    cinspect->add_option("--checkpoint", inspect.checkpoint_path, "trained checkpoint")->required();
    cinspect->add_option("--data", inspect.data_path, "dataset file")->required();
    cinspect->add_option("--out", inspect.out_dir, "output directory")->required();
    cinspect->add_option("--top", inspect.top_n, "prototypes per centroid");
    cinspect->add_option("--trace", inspect.trace, "space-separated tokens to trace");

    srnn::cli::GradcheckOptions gradcheck;
    CLI::App* cgrad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    cgrad->add_option("--cell", gradcheck.cell, "gru | lstm | lstm-p");
    cgrad->add_option("--similarity", gradcheck.similarity, "dot | euclidean");
    cgrad->add_option("--hidden", gradcheck.hidden, "hidden units");
    cgrad->add_option("--centroids", gradcheck.centroids, "centroid count");
    cgrad->add_option("--len", gradcheck.seq_len, "sequence length");
    cgrad->add_option("--eps", gradcheck.eps, "central-difference step");
    cgrad->add_option("--threshold", gradcheck.threshold, "max allowed relative error");
    cgrad->add_option("--seed", gradcheck.seed, "rng seed");
    cgrad->add_option("--inject-bug", gradcheck.inject_bug, "")->group(""); // test fixture

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : srnn::cli::kUsageError;
    }

    try {
        if (*cgen) {
            if (!*gen_seed) gen.seed = seed_fallback();
            if (gen_large) gen.preset = "large";
            else if (gen_small) gen.preset = "small";
            return srnn::cli::cmd_gen(gen);
        }
        if (*ctrain) {
            if (!*train_seed) train.seed = seed_fallback();
            return srnn::cli::cmd_train(train);
        }
        if (*cextract) return srnn::cli::cmd_extract(extract);
        if (*cinspect) return srnn::cli::cmd_inspect(inspect);
        if (*cgrad) return srnn::cli::cmd_gradcheck(gradcheck);
    } catch (const srnn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return srnn::cli::kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return srnn::cli::kUsageError;
    }
    return srnn::cli::kUsageError;
}
