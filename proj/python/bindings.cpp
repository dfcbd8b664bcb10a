// Python bindings. Logit matrices cross the boundary as float64 arrays
// (rows x vocabulary); token sequences as lists of ints.

#include "sgem/adaptation.hpp"
#include "sgem/corpus.hpp"
#include "sgem/decoding.hpp"
#include "sgem/objectives.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace sgem;

namespace {

LogitMatrix as_logits(const Matrix& values, bool normalize) {
  return normalize ? LogitMatrix::from_scores(values) : LogitMatrix{values, false};
}

RowMask as_mask(const std::optional<std::vector<int>>& mask, Eigen::Index rows) {
  if (!mask) return all_rows(static_cast<int>(rows));
  return RowMask(mask->begin(), mask->end());
}

}  // namespace

PYBIND11_MODULE(_sgem, m) {
  m.doc() = "Single-utterance test-time adaptation for speech recognition";

  py::register_exception<Error>(m, "SgemError", PyExc_ValueError);

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init<std::vector<std::string>, int>(), py::arg("tokens"), py::arg("blank_index"))
      .def_static("reference", &Vocabulary::reference)
      .def_property_readonly("size", &Vocabulary::size)
      .def_property_readonly("blank_index", &Vocabulary::blank_index)
      .def_property_readonly("tokens", &Vocabulary::tokens)
      .def("encode", [](const Vocabulary& v, const std::string& text) { return encode_text(v, text).ids; })
      .def("decode", [](const Vocabulary& v, const std::vector<int>& ids) { return decode_text(v, {ids}); });

  py::class_<AdaptationConfig>(m, "AdaptationConfig")
      .def(py::init<>())
      .def_readwrite("N", &AdaptationConfig::N)
      .def_readwrite("T", &AdaptationConfig::T)
      .def_readwrite("tau_scale", &AdaptationConfig::tau_scale)
      .def_readwrite("alpha", &AdaptationConfig::alpha)
      .def_readwrite("lambda_ns", &AdaptationConfig::lambda_ns)
      .def_readwrite("lambda_lm", &AdaptationConfig::lambda_lm)
      .def_readwrite("beam_width", &AdaptationConfig::beam_width)
      .def_readwrite("eta_i", &AdaptationConfig::eta_i)
      .def_readwrite("eta_f", &AdaptationConfig::eta_f)
      .def_readwrite("weight_decay", &AdaptationConfig::weight_decay)
      .def_readwrite("trainable_groups", &AdaptationConfig::trainable_groups)
      .def_readwrite("use_beam_search", &AdaptationConfig::use_beam_search)
      .def_readwrite("use_gem", &AdaptationConfig::use_gem)
      .def_readwrite("use_ns", &AdaptationConfig::use_ns)
      .def_readwrite("blank_mask_gem", &AdaptationConfig::blank_mask_gem)
      .def_readwrite("blank_mask_ns", &AdaptationConfig::blank_mask_ns)
      .def_readwrite("reacquire_every_step", &AdaptationConfig::reacquire_every_step)
      .def_readwrite("seed", &AdaptationConfig::seed)
      .def("tau", &AdaptationConfig::tau, py::arg("vocab_size"))
      .def("validate", [](const AdaptationConfig& c, bool allow_idle) { validate_config(c, allow_idle); },
           py::arg("allow_idle") = false)
      .def("__eq__", [](const AdaptationConfig& a, const AdaptationConfig& b) { return a == b; });
  m.def("preset_ctc", &preset_ctc);
  m.def("preset_conformer", &preset_conformer);
  m.def("preset_transducer", &preset_transducer);
  m.def("parse_config", [](const std::string& text) { return parse_config(text); });
  m.def("load_config", [](const std::filesystem::path& path) { return load_config(path); });

  // Losses take raw scores and normalize them unless normalize=False.
  m.def("renyi_entropy", &renyi_entropy, py::arg("p"), py::arg("alpha"));
  m.def("shannon_entropy", &shannon_entropy, py::arg("p"));
  m.def(
      "gem_loss",
      [](const Matrix& scores, double alpha, double T, std::optional<std::vector<int>> mask, bool normalize) {
        const LossTerm t = gem_loss(as_logits(scores, normalize), as_mask(mask, scores.rows()), alpha, T);
        return py::make_tuple(t.value, t.grad);
      },
      py::arg("scores"), py::arg("alpha"), py::arg("T"), py::arg("mask") = py::none(), py::arg("normalize") = true);
  m.def(
      "ns_loss",
      [](const Matrix& scores, double tau, double T, std::optional<std::vector<int>> mask, bool normalize) {
        const LossTerm t = ns_loss(as_logits(scores, normalize), as_mask(mask, scores.rows()), tau, T);
        return py::make_tuple(t.value, t.grad);
      },
      py::arg("scores"), py::arg("tau"), py::arg("T"), py::arg("mask") = py::none(), py::arg("normalize") = true);

  py::class_<Hypothesis>(m, "Hypothesis")
      .def_property_readonly("sequence", [](const Hypothesis& h) { return h.sequence.ids; })
      .def_readonly("am_score", &Hypothesis::am_score)
      .def_readonly("lm_score", &Hypothesis::lm_score)
      .def_readonly("fused_score", &Hypothesis::fused_score);

  py::class_<NGramLM>(m, "NGramLM")
      .def_static("load", &NGramLM::load, py::arg("path"), py::arg("vocab"))
      .def_property_readonly("order", &NGramLM::order)
      .def("score_sentence",
           [](const NGramLM& lm, const std::vector<int>& ids) { return lm.score_sentence(TokenSequence{ids}); });

  m.def(
      "greedy_decode",
      [](const Matrix& logits, const Vocabulary& vocab) { return greedy_decode(LogitMatrix{logits, false}, vocab).ids; },
      py::arg("logits"), py::arg("vocab"));
  m.def(
      "ctc_beam_search",
      [](const Matrix& logits, const Vocabulary& vocab, const NGramLM* lm, int beam_width, double lambda_lm) {
        return ctc_beam_search(LogitMatrix{logits, false}, vocab, lm, beam_width, lambda_lm);
      },
      py::arg("logits"), py::arg("vocab"), py::arg("lm") = nullptr, py::arg("beam_width") = 5,
      py::arg("lambda_lm") = 0.0);
  m.def(
      "forced_align",
      [](const Matrix& logits, const std::vector<int>& target, const Vocabulary& vocab) {
        return forced_align(LogitMatrix{logits, false}, TokenSequence{target}, vocab).ids;
      },
      py::arg("logits"), py::arg("target"), py::arg("vocab"));

  py::class_<Utterance>(m, "Utterance")
      .def(py::init([](std::string id, Matrix features, std::optional<std::string> reference) {
             return Utterance{std::move(id), std::move(features), std::move(reference)};
           }),
           py::arg("id"), py::arg("features"), py::arg("reference") = py::none())
      .def_readonly("id", &Utterance::id)
      .def_readonly("features", &Utterance::features)
      .def_readonly("reference", &Utterance::reference);
  m.def("load_corpus", &load_corpus, py::arg("manifest"));

  py::class_<AcousticModel>(m, "AcousticModel")
      .def_static("load", &load_checkpoint, py::arg("path"), py::arg("vocab"))
      .def_property_readonly("mode", [](const AcousticModel& a) { return std::string(to_string(a.mode())); })
      .def_property_readonly("group_names", &AcousticModel::group_names)
      .def("forward", [](const AcousticModel& a, const Utterance& u) { return a.forward_frames(u).values; });

  py::class_<AdaptationResult>(m, "AdaptationResult")
      .def_readonly("utterance_id", &AdaptationResult::utterance_id)
      .def_readonly("transcript_before", &AdaptationResult::transcript_before)
      .def_readonly("transcript_after", &AdaptationResult::transcript_after)
      .def_readonly("lr_schedule", &AdaptationResult::lr_schedule)
      .def_readonly("skipped_steps", &AdaptationResult::skipped_steps)
      .def_readonly("fallback_used", &AdaptationResult::fallback_used)
      .def_property_readonly("losses", [](const AdaptationResult& r) {
        std::vector<double> out;
        for (const auto& l : r.loss_trajectory) out.push_back(l.total);
        return out;
      });
  m.def(
      "adapt_corpus",
      [](const AcousticModel& model, const NGramLM* lm, const std::vector<Utterance>& corpus,
         const AdaptationConfig& config, const std::string& decode, int jobs) {
        py::gil_scoped_release release;
        return run_corpus(model, lm, corpus, config, parse_decode_mode(decode), jobs);
      },
      py::arg("model"), py::arg("lm"), py::arg("corpus"), py::arg("config"), py::arg("decode") = "greedy",
      py::arg("jobs") = 1);

  m.def("wer", &wer, py::arg("reference"), py::arg("hypothesis"));
  m.def("cer", &cer, py::arg("reference"), py::arg("hypothesis"));
}
