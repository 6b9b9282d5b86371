#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "logfid/error.hpp"
#include "logfid/pipeline.hpp"

namespace logfid {

static_assert(std::endian::native == std::endian::little, "bundle format assumes little-endian hosts");

namespace {

constexpr char kMagic[8] = {'L', 'F', 'I', 'D', 'B', 'N', 'D', 'L'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <class T>
  void pod(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    bytes(&v, sizeof v);
  }
  void u64(std::uint64_t v) { pod(v); }
  void i64(std::int64_t v) { pod(v); }
  void f64(double v) { pod(v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    bytes(v.data(), v.size() * sizeof(double));
  }
  void matrix(const Eigen::MatrixXd& m) {
    i64(m.rows());
    i64(m.cols());
    bytes(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  void bytes(void* p, std::size_t n) {
    if (n > in_.size() - pos_) throw FormatError("bundle is truncated");
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  std::int64_t i64() { return pod<std::int64_t>(); }
  double f64() { return pod<double>(); }
  std::uint64_t count(std::size_t element_size) {
    const auto n = u64();
    if (element_size > 0 && n > (in_.size() - pos_) / element_size) throw FormatError("bundle is truncated");
    return n;
  }
  std::string str() {
    std::string s(count(1), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  std::vector<double> doubles() {
    std::vector<double> v(count(sizeof(double)));
    bytes(v.data(), v.size() * sizeof(double));
    return v;
  }
  Eigen::MatrixXd matrix() {
    const auto rows = i64();
    const auto cols = i64();
    if (rows < 0 || cols < 0 ||
        (rows > 0 && static_cast<std::uint64_t>(cols) > (in_.size() - pos_) / sizeof(double) / static_cast<std::uint64_t>(rows))) {
      throw FormatError("bundle matrix has an invalid shape");
    }
    Eigen::MatrixXd m(rows, cols);
    bytes(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    return m;
  }
  Eigen::VectorXd column() {
    auto m = matrix();
    if (m.cols() != 1) throw FormatError("bundle expected a column vector");
    return m;
  }
  Eigen::RowVectorXd row() {
    auto m = matrix();
    if (m.rows() != 1) throw FormatError("bundle expected a row vector");
    return m;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

void write_shape(Writer& w, const EncoderShape& s) {
  for (int v : {s.vocab_size, s.d, s.n_layers, s.n_heads, s.ff_dim, s.max_length}) w.i64(v);
}

EncoderShape read_shape(Reader& r) {
  EncoderShape s;
  for (int* v : {&s.vocab_size, &s.d, &s.n_layers, &s.n_heads, &s.ff_dim, &s.max_length}) {
    *v = static_cast<int>(r.i64());
  }
  if (s.vocab_size < 1 || s.d < 1 || s.n_layers < 1 || s.n_layers > 1024 || s.n_heads < 1 ||
      s.ff_dim < 1 || s.max_length < 1) {
    throw FormatError("bundle encoder shape is invalid");
  }
  return s;
}

void write_tree(Writer& w, const DecisionTree& t) {
  w.u64(t.nodes.size());
  for (const auto& n : t.nodes) {
    w.i64(n.feature);
    w.f64(n.threshold);
    w.i64(n.left);
    w.i64(n.right);
    w.i64(n.label);
  }
}

DecisionTree read_tree(Reader& r) {
  DecisionTree t;
  t.nodes.resize(r.count(40));
  for (auto& n : t.nodes) {
    n.feature = static_cast<int>(r.i64());
    n.threshold = r.f64();
    n.left = static_cast<int>(r.i64());
    n.right = static_cast<int>(r.i64());
    n.label = static_cast<int>(r.i64());
  }
  return t;
}

}  // namespace

std::string serialize_bundle(const ModelBundle& b) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(b.version);

  w.f64(b.parser.similarity_threshold);
  w.i64(b.parser.depth);
  w.u64(b.parser.max_children);
  w.u64(b.vocabulary.size());
  for (const auto& t : b.vocabulary) {
    w.i64(t.event_id);
    w.i64(t.occurrence_count);
    w.u64(t.tokens.size());
    for (const auto& tok : t.tokens) w.str(tok);
  }
  w.f64(b.window_size);

  const auto& m = b.models;
  w.i64(m.tokens.num_events);
  w.doubles(m.tokens.weights);
  write_shape(w, m.encoder.shape);
  m.encoder.visit([&](const std::string&, const Matrix& x) { w.matrix(x); });
  w.matrix(m.centroids.m);
  w.doubles(m.centroids.counters);
  w.matrix(m.hmm.pi);
  w.matrix(m.hmm.a);
  w.matrix(m.hmm.b);
  for (double v : {m.thresholds.mean_t, m.thresholds.mu, m.thresholds.sigma, m.thresholds.a1,
                   m.thresholds.a2}) {
    w.f64(v);
  }
  w.i64(static_cast<int>(m.fti_representation));
  w.pod<std::uint8_t>(m.fti ? 1 : 0);
  if (m.fti) {
    const auto& f = *m.fti;
    w.i64(static_cast<int>(f.kind));
    w.u64(f.classes.size());
    for (const auto& c : f.classes) w.str(c);
    w.i64(f.n_features);
    w.matrix(f.logistic.weights);
    w.matrix(f.logistic.bias);
    w.matrix(f.logistic.mean);
    w.matrix(f.logistic.scale);
    w.doubles(f.logistic.loss_trace);
    w.u64(f.trees.size());
    for (const auto& t : f.trees) write_tree(w, t);
  }

  w.u64(b.provenance.config_hash);
  w.u64(b.provenance.seed);
  w.f64(b.provenance.data_first_timestamp);
  w.f64(b.provenance.data_last_timestamp);
  w.str(b.provenance.config_json);
  return w.take();
}

ModelBundle deserialize_bundle(const std::string& bytes) {
  Reader r(bytes);
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError("not a model bundle");
  ModelBundle b;
  b.version = r.pod<std::uint32_t>();
  if (b.version != ModelBundle::kFormatVersion) {
    throw FormatError("unsupported bundle version " + std::to_string(b.version) + " (this build reads " +
                      std::to_string(ModelBundle::kFormatVersion) + ")");
  }

  b.parser.similarity_threshold = r.f64();
  b.parser.depth = static_cast<int>(r.i64());
  b.parser.max_children = r.u64();
  b.vocabulary.resize(r.count(24));
  for (auto& t : b.vocabulary) {
    t.event_id = static_cast<EventId>(r.i64());
    t.occurrence_count = r.i64();
    t.tokens.resize(r.count(8));
    for (auto& tok : t.tokens) tok = r.str();
  }
  b.window_size = r.f64();

  auto& m = b.models;
  m.tokens.num_events = static_cast<int>(r.i64());
  m.tokens.weights = r.doubles();
  if (m.tokens.num_events < 1 || m.tokens.weights.size() != static_cast<std::size_t>(m.tokens.size())) {
    throw FormatError("bundle token weights do not match the vocabulary");
  }
  m.encoder = EncoderParams::zeros(read_shape(r));
  m.encoder.visit([&](const std::string& name, Matrix& x) {
    Matrix read = r.matrix();
    if (read.rows() != x.rows() || read.cols() != x.cols()) {
      throw FormatError("bundle parameter " + name + " has the wrong shape");
    }
    x = std::move(read);
  });
  m.centroids.m = r.matrix();
  m.centroids.counters = r.doubles();
  m.hmm.pi = r.column();
  m.hmm.a = r.matrix();
  m.hmm.b = r.matrix();
  m.thresholds.mean_t = r.f64();
  m.thresholds.mu = r.f64();
  m.thresholds.sigma = r.f64();
  m.thresholds.a1 = r.f64();
  m.thresholds.a2 = r.f64();
  const auto rep = r.i64();
  if (rep < 0 || rep > 2) throw FormatError("bundle FTI representation is invalid");
  m.fti_representation = static_cast<Representation>(rep);
  const auto has_fti = r.pod<std::uint8_t>();
  if (has_fti > 1) throw FormatError("bundle FTI flag is invalid");
  if (has_fti) {
    FtiModel f;
    const auto kind = r.i64();
    if (kind < 0 || kind > 2) throw FormatError("bundle classifier kind is invalid");
    f.kind = static_cast<ClassifierKind>(kind);
    f.classes.resize(r.count(8));
    for (auto& c : f.classes) c = r.str();
    f.n_features = static_cast<int>(r.i64());
    f.logistic.weights = r.matrix();
    f.logistic.bias = r.row();
    f.logistic.mean = r.row();
    f.logistic.scale = r.row();
    f.logistic.loss_trace = r.doubles();
    f.trees.resize(r.count(8));
    for (auto& t : f.trees) t = read_tree(r);
    const auto n_classes = static_cast<int>(f.classes.size());
    for (const auto& t : f.trees) {
      const auto n_nodes = static_cast<int>(t.nodes.size());
      for (int i = 0; i < n_nodes; ++i) {
        const auto& n = t.nodes[static_cast<std::size_t>(i)];
        const bool leaf = n.feature < 0;
        // children always follow their parent, so a walk cannot cycle
        if (n.feature >= f.n_features || n.label < 0 || n.label >= n_classes ||
            (!leaf && (n.left <= i || n.left >= n_nodes || n.right <= i || n.right >= n_nodes))) {
          throw FormatError("bundle decision tree is corrupt");
        }
      }
    }
    if (f.kind == ClassifierKind::LogisticRegression &&
        (f.logistic.weights.rows() != f.n_features || f.logistic.weights.cols() != n_classes ||
         f.logistic.bias.size() != n_classes || f.logistic.mean.size() != f.n_features ||
         f.logistic.scale.size() != f.n_features)) {
      throw FormatError("bundle logistic model has the wrong shape");
    }
    m.fti = std::move(f);
  }

  b.provenance.config_hash = r.u64();
  b.provenance.seed = r.u64();
  b.provenance.data_first_timestamp = r.f64();
  b.provenance.data_last_timestamp = r.f64();
  b.provenance.config_json = r.str();
  if (!r.done()) throw FormatError("bundle has trailing bytes");

  try {
    m.hmm.validate(1e-6);
  } catch (const Error& e) {
    throw FormatError(std::string("bundle HMM is invalid: ") + e.what());
  }
  if (!m.centroids.initialized() || m.centroids.dim() != m.encoder.shape.d ||
      m.hmm.symbols() != m.centroids.k()) {
    throw FormatError("bundle centroids do not match the encoder and HMM");
  }
  return b;
}

bool ModelBundle::identical(const ModelBundle& other) const {
  return serialize_bundle(*this) == serialize_bundle(other);
}

void save_bundle(const std::string& path, const ModelBundle& bundle) {
  const auto bytes = serialize_bundle(bundle);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("cannot move bundle into place at " + path);
  }
}

ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_bundle(bytes);
}

}  // namespace logfid
