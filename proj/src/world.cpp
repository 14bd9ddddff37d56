#include "divsim/world.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "divsim/errors.hpp"
#include "divsim/rng.hpp"

namespace divsim {

Eigen::MatrixXd Extractor::effective() const {
  const double d = static_cast<double>(transform.rows());
  return transform + (noise_scale / std::sqrt(d)) * noise;
}

bool World::operator==(const World& other) const {
  auto cfg_eq = [](const WorldConfig& a, const WorldConfig& b) {
    return a.n_identities == b.n_identities &&
           a.images_per_identity == b.images_per_identity &&
           a.intra_sigma == b.intra_sigma && a.n_extractors == b.n_extractors &&
           a.extractor_noise == b.extractor_noise &&
           a.aux_pool_size == b.aux_pool_size && a.dims == b.dims &&
           a.seed == b.seed;
  };
  if (!cfg_eq(config, other.config)) return false;
  if (identity_means.size() != other.identity_means.size() ||
      images.size() != other.images.size() ||
      extractors.size() != other.extractors.size() ||
      aux_pool.size() != other.aux_pool.size())
    return false;
  for (size_t i = 0; i < identity_means.size(); ++i)
    if (identity_means[i] != other.identity_means[i]) return false;
  for (size_t i = 0; i < images.size(); ++i) {
    const auto& a = images[i];
    const auto& b = other.images[i];
    if (a.image_id != b.image_id || a.identity != b.identity ||
        a.protected_flag != b.protected_flag || a.latent != b.latent)
      return false;
  }
  for (size_t i = 0; i < extractors.size(); ++i) {
    const auto& a = extractors[i];
    const auto& b = other.extractors[i];
    if (a.extractor_id != b.extractor_id || a.noise_scale != b.noise_scale ||
        a.noise_seed != b.noise_seed || a.transform != b.transform ||
        a.noise != b.noise)
      return false;
  }
  for (size_t i = 0; i < aux_pool.size(); ++i)
    if (aux_pool[i] != other.aux_pool[i]) return false;
  return true;
}

namespace {

Eigen::VectorXd random_gaussian(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = normal(rng);
  return v;
}

Eigen::MatrixXd random_gaussian_matrix(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) m(r, c) = normal(rng);
  return m;
}

Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng, int d) {
  Eigen::MatrixXd g = random_gaussian_matrix(rng, d);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  // Fix column signs against the R diagonal so the factorization is unique.
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < d; ++c)
    if (r(c, c) < 0) q.col(c) = -q.col(c);
  return q;
}

}  // namespace

World generate_world(const WorldConfig& cfg) {
  if (cfg.n_identities < 2) throw InvalidConfigError("n_identities must be >= 2");
  if (cfg.images_per_identity < 1)
    throw InvalidConfigError("images_per_identity must be >= 1");
  if (cfg.dims < 2) throw InvalidConfigError("dims must be >= 2");
  if (cfg.n_extractors < 1) throw InvalidConfigError("n_extractors must be >= 1");
  if (cfg.aux_pool_size < 0) throw InvalidConfigError("aux_pool_size must be >= 0");
  if (cfg.intra_sigma < 0) throw InvalidConfigError("intra_sigma must be >= 0");
  if (cfg.extractor_noise < 0)
    throw InvalidConfigError("extractor_noise must be >= 0");

  World w;
  w.config = cfg;
  const int d = cfg.dims;
  const double coord_sigma = cfg.intra_sigma / std::sqrt(static_cast<double>(d));

  auto means_rng = make_rng(derive_seed(cfg.seed, {1}));
  w.identity_means.reserve(cfg.n_identities);
  for (int i = 0; i < cfg.n_identities; ++i)
    w.identity_means.push_back(normalize(random_gaussian(means_rng, d)));

  auto image_rng = make_rng(derive_seed(cfg.seed, {2}));
  w.images.reserve(static_cast<size_t>(cfg.n_identities) * cfg.images_per_identity);
  int next_image_id = 0;
  for (int i = 0; i < cfg.n_identities; ++i) {
    for (int j = 0; j < cfg.images_per_identity; ++j) {
      Eigen::VectorXd latent =
          normalize(w.identity_means[i] + coord_sigma * random_gaussian(image_rng, d));
      w.images.push_back(ImageRecord{next_image_id++, i, std::move(latent), false});
    }
  }

  w.extractors.reserve(cfg.n_extractors);
  for (int k = 0; k < cfg.n_extractors; ++k) {
    Extractor e;
    e.extractor_id = k;
    e.noise_scale = cfg.extractor_noise;
    e.noise_seed = derive_seed(cfg.seed, {3, static_cast<std::uint64_t>(k)});
    auto ext_rng = make_rng(e.noise_seed);
    e.transform = random_orthogonal(ext_rng, d);
    e.noise = random_gaussian_matrix(ext_rng, d);
    w.extractors.push_back(std::move(e));
  }

  auto aux_rng = make_rng(derive_seed(cfg.seed, {4}));
  w.aux_pool.reserve(cfg.aux_pool_size);
  for (int i = 0; i < cfg.aux_pool_size; ++i)
    w.aux_pool.push_back(normalize(random_gaussian(aux_rng, d)));

  return w;
}

Embedding embed(const Extractor& e, const Eigen::VectorXd& latent) {
  if (latent.size() != e.transform.cols())
    throw DimensionMismatchError(e.transform.cols(), latent.size());
  return normalize(e.effective() * latent);
}

Eigen::VectorXd embed_pullback(const Extractor& e, const Eigen::VectorXd& latent,
                               const Eigen::VectorXd& cotangent) {
  if (latent.size() != e.transform.cols())
    throw DimensionMismatchError(e.transform.cols(), latent.size());
  if (cotangent.size() != e.transform.rows())
    throw DimensionMismatchError(e.transform.rows(), cotangent.size());
  const Eigen::MatrixXd a = e.effective();
  const Eigen::VectorXd u = a * latent;
  const double n = u.norm();
  if (n < kZeroNormEps) throw ZeroVectorError();
  const Eigen::VectorXd uhat = u / n;
  // d(normalize(u))/du = (I - uhat uhat^T) / |u|
  const Eigen::VectorXd t = (cotangent - uhat * uhat.dot(cotangent)) / n;
  return a.transpose() * t;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), ",%.17g", v);
  out += buf;
}

void append_vector(std::string& out, const Eigen::VectorXd& v) {
  for (int i = 0; i < v.size(); ++i) append_double(out, v[i]);
}

void append_matrix(std::string& out, const Eigen::MatrixXd& m) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) append_double(out, m(r, c));
}

struct LineParser {
  const std::string& line;
  int line_no;
  size_t pos = 0;

  bool done() const { return pos >= line.size(); }

  std::string next_token() {
    if (done()) throw ParseError(line_no, "unexpected end of line");
    size_t comma = line.find(',', pos);
    std::string tok = line.substr(pos, comma == std::string::npos
                                           ? std::string::npos
                                           : comma - pos);
    pos = comma == std::string::npos ? line.size() : comma + 1;
    return tok;
  }

  double next_double() {
    std::string tok = next_token();
    const char* begin = tok.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
      throw ParseError(line_no, "malformed float '" + tok + "'");
    return v;
  }

  long long next_int() {
    std::string tok = next_token();
    const char* begin = tok.c_str();
    char* end = nullptr;
    long long v = std::strtoll(begin, &end, 10);
    if (end == begin || *end != '\0')
      throw ParseError(line_no, "malformed integer '" + tok + "'");
    return v;
  }

  std::uint64_t next_u64() {
    std::string tok = next_token();
    const char* begin = tok.c_str();
    char* end = nullptr;
    std::uint64_t v = std::strtoull(begin, &end, 10);
    if (end == begin || *end != '\0')
      throw ParseError(line_no, "malformed integer '" + tok + "'");
    return v;
  }

  Eigen::VectorXd remaining_vector() {
    std::vector<double> vals;
    while (!done()) vals.push_back(next_double());
    return Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
  }

  Eigen::VectorXd next_vector(int d) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = next_double();
    return v;
  }

  Eigen::MatrixXd next_matrix(int d) {
    Eigen::MatrixXd m(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) m(r, c) = next_double();
    return m;
  }
};

}  // namespace

void export_world(const World& w, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");

  std::string buf;
  buf.reserve(1 << 20);
  {
    char head[256];
    std::snprintf(head, sizeof(head), "!world,%d,%llu,%d,%d,%.17g,%d,%.17g,%d\n",
                  w.config.dims,
                  static_cast<unsigned long long>(w.config.seed),
                  w.config.n_identities, w.config.images_per_identity,
                  w.config.intra_sigma, w.config.n_extractors,
                  w.config.extractor_noise, w.config.aux_pool_size);
    buf += head;
  }
  for (size_t i = 0; i < w.identity_means.size(); ++i) {
    buf += "!mean," + std::to_string(i);
    append_vector(buf, w.identity_means[i]);
    buf += '\n';
  }
  for (const auto& e : w.extractors) {
    char head[128];
    std::snprintf(head, sizeof(head), "!extractor,%d,%.17g,%llu", e.extractor_id,
                  e.noise_scale, static_cast<unsigned long long>(e.noise_seed));
    buf += head;
    append_matrix(buf, e.transform);
    append_matrix(buf, e.noise);
    buf += '\n';
  }
  for (const auto& a : w.aux_pool) {
    buf += "!aux";
    append_vector(buf, a);
    buf += '\n';
  }
  for (const auto& img : w.images) {
    buf += std::to_string(img.identity) + ',' + std::to_string(img.image_id) +
           ',' + (img.protected_flag ? '1' : '0');
    append_vector(buf, img.latent);
    buf += '\n';
  }
  out << buf;
  if (!out) throw IoError("write failed for '" + path + "'");
}

void export_records(const std::vector<ImageRecord>& records,
                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  std::string buf;
  for (const auto& img : records) {
    buf += std::to_string(img.identity) + ',' + std::to_string(img.image_id) +
           ',' + (img.protected_flag ? '1' : '0');
    append_vector(buf, img.latent);
    buf += '\n';
  }
  out << buf;
  if (!out) throw IoError("write failed for '" + path + "'");
}

World import_world(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  World w;
  bool have_header = false;
  int dims = -1;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    LineParser p{line, line_no};
    if (line[0] == '!') {
      std::string tag = p.next_token();
      if (tag == "!world") {
        w.config.dims = static_cast<int>(p.next_int());
        w.config.seed = p.next_u64();
        w.config.n_identities = static_cast<int>(p.next_int());
        w.config.images_per_identity = static_cast<int>(p.next_int());
        w.config.intra_sigma = p.next_double();
        w.config.n_extractors = static_cast<int>(p.next_int());
        w.config.extractor_noise = p.next_double();
        w.config.aux_pool_size = static_cast<int>(p.next_int());
        dims = w.config.dims;
        have_header = true;
      } else if (tag == "!mean") {
        (void)p.next_int();
        Eigen::VectorXd v = dims > 0 ? p.next_vector(dims) : p.remaining_vector();
        if (dims < 0) dims = static_cast<int>(v.size());
        w.identity_means.push_back(std::move(v));
      } else if (tag == "!extractor") {
        if (dims < 0) throw ParseError(line_no, "extractor line before !world header");
        Extractor e;
        e.extractor_id = static_cast<int>(p.next_int());
        e.noise_scale = p.next_double();
        e.noise_seed = p.next_u64();
        e.transform = p.next_matrix(dims);
        e.noise = p.next_matrix(dims);
        w.extractors.push_back(std::move(e));
      } else if (tag == "!aux") {
        Eigen::VectorXd v = dims > 0 ? p.next_vector(dims) : p.remaining_vector();
        if (dims < 0) dims = static_cast<int>(v.size());
        w.aux_pool.push_back(std::move(v));
      } else {
        throw ParseError(line_no, "unknown metadata tag '" + tag + "'");
      }
      if (!p.done()) throw ParseError(line_no, "trailing fields");
      continue;
    }
    ImageRecord img;
    img.identity = static_cast<int>(p.next_int());
    img.image_id = static_cast<int>(p.next_int());
    long long flag = p.next_int();
    if (flag != 0 && flag != 1)
      throw ParseError(line_no, "protected_flag must be 0 or 1");
    img.protected_flag = flag == 1;
    img.latent = p.remaining_vector();
    if (img.latent.size() == 0) throw ParseError(line_no, "record has no values");
    if (dims < 0) dims = static_cast<int>(img.latent.size());
    if (img.latent.size() != dims)
      throw DimensionMismatchError(dims, img.latent.size());
    w.images.push_back(std::move(img));
  }

  if (!have_header) {
    // Bare record file: synthesize minimal metadata around the embeddings.
    if (w.images.empty()) throw IoError("file '" + path + "' contains no records");
    w.config.dims = dims;
    w.config.seed = 0;
    int max_id = 0;
    for (const auto& img : w.images) max_id = std::max(max_id, img.identity);
    w.config.n_identities = max_id + 1;
    w.config.images_per_identity = 0;
    w.config.n_extractors = 1;
    w.config.extractor_noise = 0.0;
    w.config.aux_pool_size = 0;
    Extractor e;
    e.extractor_id = 0;
    e.transform = Eigen::MatrixXd::Identity(dims, dims);
    e.noise = Eigen::MatrixXd::Zero(dims, dims);
    w.extractors.push_back(std::move(e));
  }
  return w;
}

}  // namespace divsim
