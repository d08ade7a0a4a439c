#include "srnn/model.hpp"

namespace srnn {

Model Model::init(const ModelConfig& cfg_in, std::uint64_t seed) {
    Model m;
    m.cfg = cfg_in;
    if (m.cfg.embed == 0) m.cfg.embed = m.cfg.hidden;
    if (m.cfg.alphabet.empty()) throw Error("model: empty alphabet");
    Rng rng(seed);
    m.vocab = Vocabulary::build(m.cfg.alphabet, m.cfg.embed, rng);
    m.cell = CellParams::init(m.cfg.cell, m.cfg.hidden, m.cfg.embed, rng);
    m.centroids = CentroidSet::init(m.cfg.centroids, m.cfg.hidden, rng, m.cfg.temperature,
                                    m.cfg.similarity);
    m.head = HeadParams::init(m.cfg.head, m.head_input_dim(), m.head_output_dim(), rng);
    return m;
}

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> out;
    out.push_back(&vocab.embedding);
    for (Parameter* p : cell.parameters()) out.push_back(p);
    out.push_back(&centroids.matrix);
    for (Parameter* p : head.parameters()) out.push_back(p);
    return out;
}

} // namespace srnn
