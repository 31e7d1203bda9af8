#include "avid/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "avid/rng.hpp"
#include "text_io.hpp"

namespace avid {

void SyntheticConfig::validate() const {
  auto bad = [](const std::string& why) { fail(ErrorCode::InvalidConfig, "synthetic data: " + why); };
  if (n_classes < 2) bad("n_classes must be >= 2");
  if (n_samples < n_classes) bad("n_samples must be >= n_classes");
  if (dim_a == 0 || dim_v == 0 || latent_dim == 0) bad("dimensions must be positive");
  if (!(separation >= 0.0) || !std::isfinite(separation)) bad("separation must be >= 0");
  if (!(noise >= 0.0) || !std::isfinite(noise)) bad("noise must be >= 0");
  if (!(modality_noise >= 0.0) || !std::isfinite(modality_noise)) bad("modality_noise must be >= 0");
}

namespace {

Matrix random_map(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
  for (double& x : m.values()) x = normal(rng);
  return m;
}

Vector linear_map(const Matrix& m, ConstSpan u) {
  Vector out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), u);
  return out;
}

}  // namespace

Dataset generate(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t L = cfg.latent_dim;

  Rng structure = make_rng(cfg.seed, "data/structure");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> means(cfg.n_classes, Vector(L));
  // Class means have length `separation`. They are mutually orthogonal when
  // the latent space has room for it, otherwise just random directions.
  for (std::size_t z = 0; z < means.size(); ++z) {
    auto& mu = means[z];
    for (double& x : mu) x = normal(structure);
    if (cfg.separation == 0.0) {
      std::fill(mu.begin(), mu.end(), 0.0);
      continue;
    }
    if (z < L)
      for (std::size_t w = 0; w < z; ++w) {
        const double c = dot(mu, means[w]) / (cfg.separation * cfg.separation);
        for (std::size_t k = 0; k < L; ++k) mu[k] -= c * means[w][k];
      }
    const double n = norm(mu);
    for (double& x : mu) x *= cfg.separation / n;
  }
  const Matrix map_a = random_map(cfg.dim_a, L, structure);
  const Matrix map_v = random_map(cfg.dim_v, L, structure);

  Dataset data;
  data.config = cfg;
  data.classes.resize(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i)
    data.classes[i] = static_cast<int>(i % cfg.n_classes);
  Rng shuffle = make_rng(cfg.seed, "data/labels");
  std::shuffle(data.classes.begin(), data.classes.end(), shuffle);

  data.audio.resize(cfg.n_samples);
  data.visual.resize(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    Rng rng = make_rng(cfg.seed, "data/sample", i);
    std::normal_distribution<double> unit(0.0, 1.0);
    Vector u = means[static_cast<std::size_t>(data.classes[i])];
    for (double& x : u) x += cfg.noise * unit(rng);
    data.audio[i] = linear_map(map_a, u);
    data.visual[i] = linear_map(map_v, u);
    for (double& x : data.audio[i]) x += cfg.modality_noise * unit(rng);
    for (double& x : data.visual[i]) x += cfg.modality_noise * unit(rng);
  }
  return data;
}

double faulty_negative_rate(std::span<const int> negative_classes, int anchor_class) {
  if (negative_classes.empty())
    fail(ErrorCode::EmptyCollection, "faulty_negative_rate: no negatives");
  const auto same = std::count(negative_classes.begin(), negative_classes.end(), anchor_class);
  return static_cast<double>(same) / static_cast<double>(negative_classes.size());
}

void save_dataset(const Dataset& data, std::ostream& out) {
  const auto& c = data.config;
  out << "dataset v1 n_classes=" << c.n_classes << " n_samples=" << c.n_samples
      << " dim_a=" << c.dim_a << " dim_v=" << c.dim_v << " latent_dim=" << c.latent_dim
      << " separation=" << textio::format_double(c.separation)
      << " noise=" << textio::format_double(c.noise)
      << " modality_noise=" << textio::format_double(c.modality_noise) << " seed=" << c.seed
      << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << i << '\t' << data.classes[i];
    for (double x : data.audio[i]) out << '\t' << textio::format_double(x);
    for (double x : data.visual[i]) out << '\t' << textio::format_double(x);
    out << '\n';
  }
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write dataset: " + path.string());
  save_dataset(data, out);
  if (!out) fail(ErrorCode::Io, "error writing dataset: " + path.string());
}

Dataset load_dataset(std::istream& in) {
  using namespace textio;
  const std::string header = next_line(in, "dataset header");
  const auto tok = split_ws(header);
  if (tok.size() != 11 || tok[0] != "dataset" || tok[1] != "v1")
    fail(ErrorCode::Parse, "bad dataset header: " + header);
  Dataset data;
  auto& c = data.config;
  c.n_classes = parse_int<std::size_t>(field(tok[2], "n_classes"));
  c.n_samples = parse_int<std::size_t>(field(tok[3], "n_samples"));
  c.dim_a = parse_int<std::size_t>(field(tok[4], "dim_a"));
  c.dim_v = parse_int<std::size_t>(field(tok[5], "dim_v"));
  c.latent_dim = parse_int<std::size_t>(field(tok[6], "latent_dim"));
  c.separation = parse_double(field(tok[7], "separation"));
  c.noise = parse_double(field(tok[8], "noise"));
  c.modality_noise = parse_double(field(tok[9], "modality_noise"));
  c.seed = parse_int<std::uint64_t>(field(tok[10], "seed"));

  data.audio.reserve(c.n_samples);
  data.visual.reserve(c.n_samples);
  data.classes.reserve(c.n_samples);
  for (std::size_t i = 0; i < c.n_samples; ++i) {
    const std::string line = next_line(in, "dataset record");
    const auto f = split(line, '\t');
    if (f.size() != 2 + c.dim_a + c.dim_v) {
      std::ostringstream msg;
      msg << "dataset record " << i << ": expected " << 2 + c.dim_a + c.dim_v << " fields, got "
          << f.size();
      fail(ErrorCode::Parse, msg.str());
    }
    if (parse_int<std::size_t>(f[0]) != i) fail(ErrorCode::Parse, "dataset record out of order");
    data.classes.push_back(parse_int<int>(f[1]));
    Vector a(c.dim_a), v(c.dim_v);
    for (std::size_t k = 0; k < c.dim_a; ++k) a[k] = parse_double(f[2 + k]);
    for (std::size_t k = 0; k < c.dim_v; ++k) v[k] = parse_double(f[2 + c.dim_a + k]);
    data.audio.push_back(std::move(a));
    data.visual.push_back(std::move(v));
  }
  return data;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read dataset: " + path.string());
  return load_dataset(in);
}

}  // namespace avid
