#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace srnn::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kGateFailure = 1;
inline constexpr int kUsageError = 2;

struct GenOptions {
    std::string task;      // tomita | bp | palindrome | copy
    std::string out_dir;
    std::uint64_t seed = 0;
    int jobs = 1;

    int grammar = 1;            // tomita
    int per_class = 64;         // tomita train sampling cap per length/class
    std::string preset;         // bp: "small" | "large" | ""
    int count = -1;             // -1: task default
    double pos_frac = -1.0;
    int lag = 100, span = 10;   // copy
};

struct TrainOptions {
    std::string train_path;
    std::string valid_path;
    std::string out_dir;
    std::string cell = "gru";
    int hidden = 50;
    int embed = 0;
    int centroids = 10;
    double tau = 1.0;
    std::string similarity = "dot";
    double lr = 0.01;
    double momentum = 0.9;
    double rho = 0.9;
    double clip = 0.0;
    int batch = 32;
    int epochs = 100;
    int patience = 0;
    std::string curriculum;       // "cap:epochs,cap:epochs"; empty: one phase
    std::string curriculum_key = "length"; // length | depth
    bool stop_when_perfect = false;
    bool state_regularized = true;
    std::uint64_t seed = 0;
    int threads = 0;
};

struct ExtractOptions {
    std::string checkpoint_path;
    std::vector<std::string> data_paths;
    std::string out_dir;
    std::string ground_truth; // "tomita1".."tomita7" or empty
    int jobs = 0;
};

struct InspectOptions {
    std::string checkpoint_path;
    std::string data_path;
    std::string out_dir;
    int top_n = 4;
    std::string trace; // space-separated tokens; empty: no trace.csv
};

struct GradcheckOptions {
    std::string cell = "gru";
    std::string similarity = "dot";
    int hidden = 6;
    int centroids = 4;
    int seq_len = 3;
    double eps = 1e-5;
    double threshold = 1e-4;
    std::uint64_t seed = 1;
    double inject_bug = 0.0; // test fixture: analytic-gradient perturbation
};

int cmd_gen(const GenOptions& opt);
int cmd_train(const TrainOptions& opt);
int cmd_extract(const ExtractOptions& opt);
int cmd_inspect(const InspectOptions& opt);
int cmd_gradcheck(const GradcheckOptions& opt);

} // namespace srnn::cli
