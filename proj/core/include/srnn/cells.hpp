#pragma once

#include "srnn/rng.hpp"
#include "srnn/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace srnn {

enum class CellKind { gru, lstm, lstm_p };

const char* cell_kind_name(CellKind k);
bool cell_kind_from_name(std::string_view name, CellKind* out);
inline bool is_memoryless(CellKind k) { return k == CellKind::gru; }

// Recurrent-component parameters. Gate order:
//   gru:    w/r/b[0]=update  [1]=reset   [2]=candidate
//   lstm*:  w/r/b[0]=input   [1]=forget  [2]=output  [3]=candidate
// peep[0..2] = forget, input, output gate peepholes (lstm_p only; the
// forget and input gates read the previous cell state, the output gate
// the updated one).
struct CellParams {
    CellKind kind = CellKind::gru;
    int hidden = 0;
    int embed = 0;
    std::vector<Parameter> w; // input-to-hidden,  [hidden x embed]
    std::vector<Parameter> r; // hidden-to-hidden, [hidden x hidden]
    std::vector<Parameter> b; // bias,             [hidden]
    std::vector<Parameter> peep; // [hidden]

    static CellParams init(CellKind kind, int hidden, int embed, Rng& rng);
    std::vector<Parameter*> parameters();
};

// One step's carried state. `hidden` rows are batch entries; for GRU the
// cell tensor is an all-zero placeholder that no op reads.
struct CellState {
    Tensor hidden;
    Tensor cell;
};

struct Vocabulary {
    std::vector<std::string> tokens; // task alphabet first, then START, END
    int start_id = -1;
    int end_id = -1;
    Parameter embedding; // [|tokens| x embed]

    static Vocabulary build(const std::vector<std::string>& alphabet, int embed, Rng& rng);
    int size() const { return static_cast<int>(tokens.size()); }
    int id_of(std::string_view token) const; // throws on unknown token
    int alphabet_size() const { return size() - 2; }
};

// Embedding row for one token, tape-connected for training.
Tensor embed(Tape& tape, Vocabulary& vocab, int token_id);
// Batched lookup, one row per entry of `token_ids`.
Tensor embed_batch(Tape& tape, Vocabulary& vocab, std::span<const int> token_ids);

CellState make_initial_state(Tape& tape, const CellParams& params, int batch);

// Candidate output u_t of the recurrent component (plus the updated cell
// state for LSTM variants). Accepts [B x d] states and [B x e] inputs.
CellState gru_step(Tape& tape, CellParams& params, const CellState& state, Tensor x);
CellState lstm_step(Tape& tape, CellParams& params, const CellState& state, Tensor x);
CellState lstm_p_step(Tape& tape, CellParams& params, const CellState& state, Tensor x);
CellState cell_step(Tape& tape, CellParams& params, const CellState& state, Tensor x);

enum class HeadKind { binary, per_step };

// Classification layer. The binary head reads [u_end ; c_end] (u_end only
// for memory-less cells); the per-step head reads u_t at every step.
struct HeadParams {
    HeadKind kind = HeadKind::binary;
    int in_dim = 0;
    int out_dim = 0;
    Parameter weight; // [out x in]
    Parameter bias;   // [out]

    static HeadParams init(HeadKind kind, int in_dim, int out_dim, Rng& rng);
    std::vector<Parameter*> parameters();
};

Tensor classify(Tape& tape, HeadParams& head, Tensor u_end, std::optional<Tensor> c_end);

} // namespace srnn
