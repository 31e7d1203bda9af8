#include "avid/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "text_io.hpp"

namespace avid {

namespace {

constexpr std::string_view kMagic = "avid-checkpoint v1";

void write_row(std::ostream& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ' ';
    textio::write_double(out, values[i]);
  }
  out << '\n';
}

Vector read_row(std::istream& in, std::size_t expected, std::string_view what) {
  const std::string line = textio::next_line(in, what);
  const auto tok = textio::split_ws(line);
  if (tok.size() != expected) {
    std::ostringstream msg;
    msg << what << ": expected " << expected << " values, got " << tok.size();
    fail(ErrorCode::Parse, msg.str());
  }
  Vector v;
  v.reserve(expected);
  for (auto t : tok) v.push_back(textio::parse_double(t));
  return v;
}

void expect_line(std::istream& in, std::string_view expected) {
  const std::string line = textio::next_line(in, expected);
  if (line != expected)
    fail(ErrorCode::Parse, "checkpoint: expected '" + std::string(expected) + "', got '" + line + "'");
}

}  // namespace

void write_mlp(std::ostream& out, std::string_view name, const MlpParams& p) {
  out << "mlp " << name << " layers=" << p.layers.size() << '\n';
  for (const auto& layer : p.layers) {
    out << "layer rows=" << layer.weight.rows() << " cols=" << layer.weight.cols()
        << " act=" << (layer.activation == Activation::Relu ? "relu" : "identity") << '\n';
    for (std::size_t r = 0; r < layer.weight.rows(); ++r) write_row(out, layer.weight.row(r));
    write_row(out, layer.bias);
  }
}

MlpParams read_mlp(std::istream& in, std::string_view name) {
  using namespace textio;
  const std::string header = next_line(in, "mlp header");
  const auto tok = split_ws(header);
  if (tok.size() != 3 || tok[0] != "mlp" || tok[1] != name)
    fail(ErrorCode::Parse, "checkpoint: expected mlp '" + std::string(name) + "', got '" + header + "'");
  const auto n_layers = parse_int<std::size_t>(field(tok[2], "layers"));
  MlpParams p;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::string lh = next_line(in, "layer header");
    const auto lt = split_ws(lh);
    if (lt.size() != 4 || lt[0] != "layer") fail(ErrorCode::Parse, "checkpoint: bad layer header");
    const auto rows = parse_int<std::size_t>(field(lt[1], "rows"));
    const auto cols = parse_int<std::size_t>(field(lt[2], "cols"));
    const auto act = field(lt[3], "act");
    Layer layer{Matrix(rows, cols), {}, Activation::Identity};
    if (act == "relu") layer.activation = Activation::Relu;
    else if (act != "identity") fail(ErrorCode::Parse, "checkpoint: unknown activation");
    for (std::size_t r = 0; r < rows; ++r) {
      const Vector row = read_row(in, cols, "weight row");
      std::copy(row.begin(), row.end(), layer.weight.row(r).begin());
    }
    layer.bias = read_row(in, rows, "bias");
    if (!p.layers.empty() && p.layers.back().output_dim() != cols)
      fail(ErrorCode::Parse, "checkpoint: layer dimensions do not chain");
    p.layers.push_back(std::move(layer));
  }
  return p;
}

void save_checkpoint(const TrainState& s, std::ostream& out) {
  out << kMagic << '\n';
  const auto entries = config_entries(s.config);
  out << "config " << entries.size() << '\n';
  for (const auto& [k, v] : entries) out << k << '=' << v << '\n';
  out << "epoch " << s.epoch << '\n';
  write_mlp(out, "audio.query", s.audio.query);
  write_mlp(out, "audio.key", s.audio.key);
  write_mlp(out, "visual.query", s.visual.query);
  write_mlp(out, "visual.key", s.visual.key);
  write_mlp(out, "classifier_a", s.classifier_a.affine);
  write_mlp(out, "classifier_v", s.classifier_v.affine);
  out << "library audio\n";
  s.library_a.dump(out);
  out << "library visual\n";
  s.library_v.dump(out);
  out << "pseudo " << s.pseudo.size() << '\n';
  for (std::size_t i = 0; i < s.pseudo.size(); ++i)
    out << s.pseudo.label(i) << ' ' << s.pseudo.ambiguity(i) << ' ' << s.pseudo.last_update_epoch(i)
        << '\n';
  out << "end\n";
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write checkpoint: " + path.string());
  save_checkpoint(state, out);
  if (!out) fail(ErrorCode::Io, "error writing checkpoint: " + path.string());
}

TrainState load_checkpoint(std::istream& in) {
  using namespace textio;
  expect_line(in, kMagic);
  const auto ch = split_ws(next_line(in, "config header"));
  if (ch.size() != 2 || ch[0] != "config") fail(ErrorCode::Parse, "checkpoint: bad config header");
  const auto n = parse_int<std::size_t>(ch[1]);
  std::ostringstream cfg_text;
  for (std::size_t i = 0; i < n; ++i) cfg_text << next_line(in, "config entry") << '\n';
  std::istringstream cfg_in(cfg_text.str());
  const TrainConfig cfg = parse_config(cfg_in);

  const auto et = split_ws(next_line(in, "epoch"));
  if (et.size() != 2 || et[0] != "epoch") fail(ErrorCode::Parse, "checkpoint: bad epoch line");
  const auto epoch = parse_int<std::size_t>(et[1]);

  ModalityEncoder audio{read_mlp(in, "audio.query"), read_mlp(in, "audio.key")};
  ModalityEncoder visual{read_mlp(in, "visual.query"), read_mlp(in, "visual.key")};
  ClassifierParams cls_a{read_mlp(in, "classifier_a")};
  ClassifierParams cls_v{read_mlp(in, "classifier_v")};
  if (!audio.query.same_shape(audio.key) || !visual.query.same_shape(visual.key))
    fail(ErrorCode::Parse, "checkpoint: query and key shapes differ");
  expect_line(in, "library audio");
  SemanticLibrary lib_a = SemanticLibrary::load(in);
  expect_line(in, "library visual");
  SemanticLibrary lib_v = SemanticLibrary::load(in);

  const auto pt = split_ws(next_line(in, "pseudo header"));
  if (pt.size() != 2 || pt[0] != "pseudo") fail(ErrorCode::Parse, "checkpoint: bad pseudo header");
  const auto samples = parse_int<std::size_t>(pt[1]);
  std::vector<int> labels(samples), last(samples);
  std::vector<std::uint32_t> amb(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto row = split_ws(next_line(in, "pseudo row"));
    if (row.size() != 3) fail(ErrorCode::Parse, "checkpoint: bad pseudo row");
    labels[i] = parse_int<int>(row[0]);
    amb[i] = parse_int<std::uint32_t>(row[1]);
    last[i] = parse_int<int>(row[2]);
  }
  expect_line(in, "end");

  TrainState s{cfg,
               std::move(audio),
               std::move(visual),
               std::move(cls_a),
               std::move(cls_v),
               std::move(lib_a),
               std::move(lib_v),
               restore_pseudo_state(std::move(labels), std::move(amb), std::move(last)),
               {},
               {},
               {},
               {},
               epoch,
               make_rng(cfg.seed, "shuffle"),
               make_rng(cfg.seed, "sampling")};
  s.opt_audio = OptimizerState::for_params(s.audio.query);
  s.opt_visual = OptimizerState::for_params(s.visual.query);
  s.opt_classifier_a = OptimizerState::for_params(s.classifier_a.affine);
  s.opt_classifier_v = OptimizerState::for_params(s.classifier_v.affine);
  return s;
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read checkpoint: " + path.string());
  return load_checkpoint(in);
}

}  // namespace avid
