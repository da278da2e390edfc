#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pbench/evaluate.hpp"
#include "pbench/priming.hpp"

namespace py = pybind11;

using namespace pbench;

namespace {

data::Side side_from_string(const std::string& side) {
  if (side == "source") return data::Side::Source;
  if (side == "target") return data::Side::Target;
  throw ValueError("side must be 'source' or 'target'");
}

// In-memory training/scoring session over one model and a fixed pair list.
class Workbench {
 public:
  Workbench(const std::string& kind,
            std::vector<std::pair<std::string, std::string>> pairs,
            uint64_t seed, int64_t embed, int64_t hidden, int64_t d_model,
            int64_t n_heads, int64_t n_layers, int64_t d_ff, int64_t max_len,
            double learning_rate) {
    auto parsed = model::model_kind_from_string(kind);
    if (!parsed) throw ValueError("kind must be 'gru' or 'transformer'");
    if (pairs.empty()) throw ValueError("need at least one pair");
    for (auto& [src, tgt] : pairs) {
      corpus_.push_back({src, tgt, std::nullopt});
    }
    src_vocab_ = data::build_vocabulary(corpus_, data::Side::Source);
    tgt_vocab_ = data::build_vocabulary(corpus_, data::Side::Target);
    model::ModelHyper hyper;
    hyper.kind = *parsed;
    hyper.src_vocab = src_vocab_.size();
    hyper.tgt_vocab = tgt_vocab_.size();
    hyper.max_len = max_len;
    hyper.gru = {embed, hidden};
    hyper.tf = {d_model, n_heads, n_layers, d_ff};
    model_ = model::init_model(hyper, seed);
    adam_.learning_rate = learning_rate;
    order_rng_ = std::make_unique<Rng>(seed);
  }

  std::vector<double> train_epochs(int64_t epochs, int64_t batch_size) {
    if (epochs < 0) throw ValueError("epochs must be >= 0");
    if (batch_size < 1) throw ValueError("batch_size must be >= 1");
    std::vector<double> losses;
    std::vector<size_t> order(corpus_.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int64_t epoch = 0; epoch < epochs; ++epoch) {
      order_rng_->shuffle(order);
      std::vector<data::Batch> batches;
      for (size_t start = 0; start < order.size();
           start += static_cast<size_t>(batch_size)) {
        std::vector<data::ParallelPair> chunk;
        size_t stop = std::min(order.size(),
                               start + static_cast<size_t>(batch_size));
        for (size_t i = start; i < stop; ++i) chunk.push_back(corpus_[order[i]]);
        batches.push_back(data::make_batch(chunk, src_vocab_, tgt_vocab_));
      }
      losses.push_back(model::train_epoch(model_, batches, adam_));
    }
    return losses;
  }

  std::string decode(const std::string& source, int64_t max_len) const {
    auto src = src_vocab_.encode_tokens(
        data::tokenize(source, data::Side::Source));
    auto result = model::greedy_decode(model_, src, max_len);
    auto tokens = tgt_vocab_.decode_ids(result.ids);
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (i) out.push_back(' ');
      out += tokens[i];
    }
    return out;
  }

  double sequence_log_prob(const std::string& source,
                           const std::string& target) const {
    auto src = src_vocab_.encode_tokens(
        data::tokenize(source, data::Side::Source));
    auto tgt = tgt_vocab_.encode_tokens(
        data::tokenize(target, data::Side::Target));
    return model::sequence_log_prob(model_, src, tgt);
  }

  double preference(const std::string& prime, const std::string& congruent,
                    const std::string& incongruent) const {
    return prime::normalized_prob_from_logs(
        sequence_log_prob(prime, congruent),
        sequence_log_prob(prime, incongruent));
  }

  int64_t src_vocab_size() const { return src_vocab_.size(); }
  int64_t tgt_vocab_size() const { return tgt_vocab_.size(); }

 private:
  std::vector<data::ParallelPair> corpus_;
  data::Vocabulary src_vocab_;
  data::Vocabulary tgt_vocab_;
  model::Model model_;
  ad::AdamState adam_;
  std::unique_ptr<Rng> order_rng_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Chinese-to-English structural priming workbench";

  py::register_exception<ValueError>(m, "ValueError", PyExc_ValueError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_ValueError);

  m.def(
      "tokenize",
      [](const std::string& text, const std::string& side) {
        return data::tokenize(text, side_from_string(side));
      },
      py::arg("text"), py::arg("side"),
      "Character tokens for 'source' text, lowercased words for 'target'.");

  m.def(
      "bleu_score",
      [](const std::vector<std::string>& candidate,
         const std::vector<std::string>& reference, int max_n,
         double smoothing_epsilon) {
        bleu::BleuConfig cfg;
        cfg.max_n = max_n;
        cfg.smoothing_epsilon = smoothing_epsilon;
        return bleu::bleu_score(candidate, reference, cfg);
      },
      py::arg("candidate"), py::arg("reference"), py::arg("max_n") = 4,
      py::arg("smoothing_epsilon") = 0.0);

  m.def(
      "bleu_difference",
      [](const std::vector<std::string>& prediction,
         const std::vector<std::string>& correct_ref,
         const std::vector<std::string>& incorrect_ref, int max_n,
         double smoothing_epsilon) {
        bleu::BleuConfig cfg;
        cfg.max_n = max_n;
        cfg.smoothing_epsilon = smoothing_epsilon;
        return bleu::bleu_difference(prediction, correct_ref, incorrect_ref,
                                     cfg);
      },
      py::arg("prediction"), py::arg("correct_ref"), py::arg("incorrect_ref"),
      py::arg("max_n") = 4, py::arg("smoothing_epsilon") = 0.0);

  m.def(
      "classify_structure",
      [](const std::vector<std::string>& tokens) -> std::optional<std::string> {
        auto label = prime::classify_structure(tokens);
        if (!label) return std::nullopt;
        return std::string(to_string(*label));
      },
      py::arg("tokens"),
      "Returns 'Active', 'Passive', 'PO', 'DO', or None when no rule fires.");

  m.def(
      "generate_corpus",
      [](uint64_t seed, int64_t n_per_structure) {
        std::vector<std::tuple<std::string, std::string, std::string>> out;
        for (const auto& pair :
             prime::generate_parallel_corpus(seed, n_per_structure)) {
          out.emplace_back(pair.source, pair.target,
                           to_string(*pair.structure));
        }
        return out;
      },
      py::arg("seed"), py::arg("n_per_structure"),
      "(source, target, structure) triples, n per structure.");

  m.def(
      "generate_test_set",
      [](uint64_t seed, int64_t n_per_structure) {
        py::list out;
        for (const auto& item :
             prime::generate_test_set(seed, n_per_structure)) {
          py::dict d;
          d["prime_source"] = item.prime_source;
          d["congruent_target"] = item.congruent_target;
          d["incongruent_target"] = item.incongruent_target;
          d["structure"] = to_string(item.structure);
          d["lexicon_key"] = item.lexicon_key;
          out.append(std::move(d));
        }
        return out;
      },
      py::arg("seed"), py::arg("n_per_structure"));

  m.def("normalized_preference", &prime::normalized_prob_from_raw,
        py::arg("p_congruent"), py::arg("p_incongruent"),
        "p_congruent / (p_congruent + p_incongruent)");

  py::class_<Workbench>(m, "Workbench",
                        "One model plus the vocabularies of a pair list; "
                        "train, decode, and score in memory.")
      .def(py::init<const std::string&,
                    std::vector<std::pair<std::string, std::string>>, uint64_t,
                    int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,
                    int64_t, double>(),
           py::arg("kind"), py::arg("pairs"), py::arg("seed") = 0,
           py::arg("embed") = 64, py::arg("hidden") = 64,
           py::arg("d_model") = 64, py::arg("n_heads") = 8,
           py::arg("n_layers") = 2, py::arg("d_ff") = 128,
           py::arg("max_len") = 32, py::arg("learning_rate") = 1e-3)
      .def("train_epochs", &Workbench::train_epochs, py::arg("epochs"),
           py::arg("batch_size") = 32)
      .def("decode", &Workbench::decode, py::arg("source"),
           py::arg("max_len") = 32)
      .def("sequence_log_prob", &Workbench::sequence_log_prob,
           py::arg("source"), py::arg("target"))
      .def("preference", &Workbench::preference, py::arg("prime"),
           py::arg("congruent"), py::arg("incongruent"))
      .def_property_readonly("src_vocab_size", &Workbench::src_vocab_size)
      .def_property_readonly("tgt_vocab_size", &Workbench::tgt_vocab_size);
}
