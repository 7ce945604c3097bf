#include "ckmm/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include "ckmm/error.hpp"

namespace ckmm {
namespace {

std::string at_line(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

std::optional<std::size_t> parse_index(const std::string& s) {
  std::size_t v = 0;
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (s.empty() || r.ec != std::errc{} || r.ptr != end) return std::nullopt;
  return v;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool getline_clean(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (text.empty() || r.ec != std::errc{} || r.ptr != end) {
    throw Error(ErrorCode::parse, "not a number: '" + text + "'");
  }
  return v;
}

void write_dataset_csv(std::ostream& out, const LongitudinalDataset& data) {
  out << "subject,feature,time,value\n";
  for (std::size_t n = 0; n < data.subjects(); ++n)
    for (std::size_t d = 0; d < data.features(); ++d)
      for (std::size_t t = 0; t < data.times(); ++t)
        out << n << ',' << d << ',' << t << ',' << format_double(data(n, d, t)) << '\n';
}

LongitudinalDataset read_dataset_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!getline_clean(in, line) || trim(line) != "subject,feature,time,value") {
    throw Error(ErrorCode::parse, at_line(source, 1) + "expected header 'subject,feature,time,value'");
  }
  struct Row {
    std::size_t n, d, t;
    double v;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::size_t n_max = 0, d_max = 0, t_max = 0;
  for (std::size_t lineno = 2; getline_clean(in, line); ++lineno) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 4) {
      throw Error(ErrorCode::parse, at_line(source, lineno) + "expected 4 fields, found " + std::to_string(f.size()));
    }
    const auto n = parse_index(trim(f[0]));
    const auto d = parse_index(trim(f[1]));
    const auto t = parse_index(trim(f[2]));
    if (!n || !d || !t) throw Error(ErrorCode::parse, at_line(source, lineno) + "indices must be nonnegative integers");
    double v = 0.0;
    try {
      v = parse_double(trim(f[3]));
    } catch (const Error& e) {
      throw Error(ErrorCode::parse, at_line(source, lineno) + e.what());
    }
    if (!std::isfinite(v)) throw Error(ErrorCode::parse, at_line(source, lineno) + "value is not finite");
    rows.push_back({*n, *d, *t, v, lineno});
    n_max = std::max(n_max, *n);
    d_max = std::max(d_max, *d);
    t_max = std::max(t_max, *t);
  }
  if (rows.empty()) throw Error(ErrorCode::format, source + ": dataset has no rows");
  const std::size_t n = n_max + 1, d = d_max + 1, t = t_max + 1;
  if (n * d * t > 200'000'000) throw Error(ErrorCode::format, source + ": index range too large");
  LongitudinalDataset data(n, d, t);
  std::vector<std::size_t> seen(n * d * t, 0);
  for (const auto& r : rows) {
    std::size_t& s = seen[(r.n * d + r.d) * t + r.t];
    if (s != 0) {
      throw Error(ErrorCode::format, at_line(source, r.line) + "duplicate cell (subject " + std::to_string(r.n) +
                                         ", feature " + std::to_string(r.d) + ", time " + std::to_string(r.t) +
                                         "), first given on line " + std::to_string(s));
    }
    s = r.line;
    data(r.n, r.d, r.t) = r.v;
  }
  const auto missing = std::find(seen.begin(), seen.end(), std::size_t{0});
  if (missing != seen.end()) {
    const auto k = static_cast<std::size_t>(missing - seen.begin());
    throw Error(ErrorCode::format, at_line(source, rows.back().line) + "unbalanced dataset: " +
                                       std::to_string(rows.size()) + " rows for N*D*T = " +
                                       std::to_string(n * d * t) + "; no value for subject " +
                                       std::to_string(k / (d * t)) + ", feature " + std::to_string(k / t % d) +
                                       ", time " + std::to_string(k % t));
  }
  return data;
}

TsData read_ts(std::istream& in, const std::string& source) {
  TsData out;
  std::optional<std::size_t> dims;
  std::optional<std::size_t> length;
  bool has_labels = false;
  bool classes_declared = false;
  std::map<std::string, int> class_ids;
  bool in_data = false;
  std::size_t cases = 0;
  std::size_t series_len = 0;
  std::vector<double> values;
  std::string raw;
  for (std::size_t lineno = 1; getline_clean(in, raw); ++lineno) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto where = at_line(source, lineno);
    if (!in_data) {
      if (line[0] != '@') throw Error(ErrorCode::parse, where + "expected an '@' header tag before @data");
      std::istringstream tags(line);
      std::string tag;
      tags >> tag;
      tag = lower(tag);
      std::vector<std::string> args;
      for (std::string a; tags >> a;) args.push_back(a);
      auto flag = [&]() {
        if (args.size() < 1 || (lower(args[0]) != "true" && lower(args[0]) != "false")) {
          throw Error(ErrorCode::parse, where + tag + " expects true or false");
        }
        return lower(args[0]) == "true";
      };
      auto count = [&]() {
        const auto v = args.size() == 1 ? parse_index(args[0]) : std::nullopt;
        if (!v || *v == 0) throw Error(ErrorCode::parse, where + tag + " expects a positive integer");
        return *v;
      };
      if (tag == "@data") {
        in_data = true;
      } else if (tag == "@problemname") {
        if (args.empty()) throw Error(ErrorCode::parse, where + "@problemName needs a value");
        out.problem_name = args[0];
      } else if (tag == "@timestamps") {
        if (flag()) throw Error(ErrorCode::parse, where + "time-stamped series are not supported");
      } else if (tag == "@univariate") {
        if (flag() && dims && *dims != 1) throw Error(ErrorCode::parse, where + "@univariate true contradicts @dimensions");
      } else if (tag == "@dimensions") {
        dims = count();
      } else if (tag == "@equallength") {
        if (!flag()) throw Error(ErrorCode::unsupported_unbalanced, where + "unequal-length series are not supported");
      } else if (tag == "@serieslength") {
        length = count();
      } else if (tag == "@classlabel") {
        has_labels = flag();
        if (has_labels) {
          for (std::size_t i = 1; i < args.size(); ++i) {
            if (class_ids.count(args[i])) throw Error(ErrorCode::parse, where + "class '" + args[i] + "' listed twice");
            class_ids[args[i]] = static_cast<int>(out.class_names.size());
            out.class_names.push_back(args[i]);
          }
          classes_declared = args.size() > 1;
        }
      } else if (tag == "@missing") {
        flag();
      } else if (tag == "@targetlabel") {
        if (flag()) throw Error(ErrorCode::parse, where + "regression targets are not supported");
      } else {
        throw Error(ErrorCode::parse, where + "unknown header tag " + tag);
      }
      continue;
    }
    auto fields = split(line, ':');
    if (has_labels) {
      if (fields.size() < 2) throw Error(ErrorCode::parse, where + "missing class label");
      const std::string name = trim(fields.back());
      fields.pop_back();
      auto it = class_ids.find(name);
      if (it == class_ids.end()) {
        if (classes_declared) throw Error(ErrorCode::parse, where + "class '" + name + "' not declared in @classLabel");
        it = class_ids.emplace(name, static_cast<int>(out.class_names.size())).first;
        out.class_names.push_back(name);
      }
      out.labels.push_back(it->second);
    }
    if (!dims) dims = fields.size();
    if (fields.size() != *dims) {
      throw Error(ErrorCode::parse, where + "expected " + std::to_string(*dims) + " dimensions, found " +
                                        std::to_string(fields.size()));
    }
    for (std::size_t d = 0; d < fields.size(); ++d) {
      const auto cells = split(fields[d], ',');
      const std::size_t expected = length ? *length : (cases == 0 && d == 0 ? cells.size() : series_len);
      if (cases == 0 && d == 0) series_len = expected;
      if (cells.size() != expected) {
        throw Error(ErrorCode::unsupported_unbalanced, where + "dimension " + std::to_string(d) + " has " +
                                                           std::to_string(cells.size()) + " points, expected " +
                                                           std::to_string(expected));
      }
      for (const auto& c : cells) {
        const std::string v = trim(c);
        if (v == "?" || lower(v) == "nan") {
          throw Error(ErrorCode::unsupported_unbalanced, where + "missing values are not supported");
        }
        try {
          values.push_back(parse_double(v));
        } catch (const Error& e) {
          throw Error(ErrorCode::parse, where + e.what());
        }
      }
    }
    ++cases;
  }
  if (!in_data) throw Error(ErrorCode::parse, source + ": no @data section");
  if (cases == 0) throw Error(ErrorCode::format, source + ": no cases after @data");
  if (length) series_len = *length;
  out.data = LongitudinalDataset(cases, *dims, series_len, std::move(values));
  return out;
}

TsData load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  if (lower(path.extension().string()) == ".ts") return read_ts(in, path.string());
  TsData out;
  out.data = read_dataset_csv(in, path.string());
  return out;
}

void write_labels_csv(std::ostream& out, const std::vector<int>& labels) {
  out << "subject,label\n";
  for (std::size_t n = 0; n < labels.size(); ++n) out << n << ',' << labels[n] << '\n';
}

std::vector<int> read_labels_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!getline_clean(in, line) || trim(line) != "subject,label") {
    throw Error(ErrorCode::parse, at_line(source, 1) + "expected header 'subject,label'");
  }
  std::vector<int> labels;
  for (std::size_t lineno = 2; getline_clean(in, line); ++lineno) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    const auto n = f.size() == 2 ? parse_index(trim(f[0])) : std::nullopt;
    const auto l = f.size() == 2 ? parse_index(trim(f[1])) : std::nullopt;
    if (!n || !l) throw Error(ErrorCode::parse, at_line(source, lineno) + "expected 'subject,label' integers");
    if (*n != labels.size()) throw Error(ErrorCode::format, at_line(source, lineno) + "subjects must be listed in order");
    labels.push_back(static_cast<int>(*l));
  }
  return labels;
}

void write_responsibilities_csv(std::ostream& out, const Responsibilities& r) {
  out << "subject";
  for (std::size_t g = 0; g < r.clusters; ++g) out << ",p" << g;
  out << '\n';
  for (std::size_t n = 0; n < r.subjects; ++n) {
    out << n;
    for (std::size_t g = 0; g < r.clusters; ++g) out << ',' << format_double(r(n, g));
    out << '\n';
  }
}

void write_trace_csv(std::ostream& out, const std::vector<double>& trace) {
  out << "iteration,loglik\n";
  for (std::size_t k = 0; k < trace.size(); ++k) out << k << ',' << format_double(trace[k]) << '\n';
}

std::string base64_encode(const std::vector<double>& values) {
  using namespace boost::archive::iterators;
  using Encoder = base64_from_binary<transform_width<const char*, 6, 8>>;
  std::string bytes;
  bytes.reserve(values.size() * 8);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  std::string out(Encoder(bytes.data()), Encoder(bytes.data() + bytes.size()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::vector<double> base64_decode(const std::string& text) {
  using namespace boost::archive::iterators;
  using Decoder = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  if (text.size() % 4 != 0) throw Error(ErrorCode::format, "base64 length is not a multiple of 4");
  const auto pad = static_cast<std::size_t>(std::count(text.end() - std::min<std::ptrdiff_t>(2, text.size()), text.end(), '='));
  for (std::size_t i = 0; i + pad < text.size(); ++i) {
    const char c = text[i];
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/')) {
      throw Error(ErrorCode::format, "invalid base64 character");
    }
  }
  std::string body = text;
  std::fill(body.end() - static_cast<std::ptrdiff_t>(pad), body.end(), 'A');
  std::string bytes(Decoder(body.cbegin()), Decoder(body.cend()));
  bytes.resize(bytes.size() - pad);
  if (bytes.size() % 8 != 0) throw Error(ErrorCode::format, "base64 payload is not a whole number of doubles");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[k * 8 + i])) << (8 * i);
    out[k] = std::bit_cast<double>(bits);
  }
  return out;
}

void write_model(std::ostream& out, const CkmmModel& m) {
  const auto& c = m.config;
  out << "ckmm-model\n";
  out << "version " << kModelFormatVersion << '\n';
  out << "clusters " << m.clusters << '\n';
  out << "features " << m.features << '\n';
  out << "times " << m.times << '\n';
  out << "config.epsilon " << format_double(c.epsilon) << '\n';
  out << "config.max_iterations " << c.max_iterations << '\n';
  out << "config.restarts " << c.restarts << '\n';
  out << "config.eta " << format_double(c.eta) << '\n';
  out << "config.delta_h " << format_double(c.delta_h) << '\n';
  out << "config.bandwidth_lower " << format_double(c.bandwidth_lower) << '\n';
  out << "config.bandwidth_upper " << format_double(c.bandwidth_upper) << '\n';
  out << "config.max_bandwidth_substeps " << c.max_bandwidth_substeps << '\n';
  out << "config.kmeans_seedings " << c.kmeans_seedings << '\n';
  out << "config.seed " << c.seed << '\n';
  out << "config.ridge " << format_double(c.ridge) << '\n';
  out << "pis " << base64_encode(m.pis) << '\n';
  for (std::size_t g = 0; g < m.clusters; ++g) {
    const auto& corr = m.corr[g];
    std::vector<double> flat;
    for (const auto& b : corr.blocks)
      for (Eigen::Index r = 0; r < b.rows(); ++r)
        for (Eigen::Index k = 0; k < b.cols(); ++k) {
          flat.push_back(b(r, k).real());
          flat.push_back(b(r, k).imag());
        }
    out << "corr." << g << ".ridge " << format_double(corr.ridge) << '\n';
    out << "corr." << g << ".blocks " << base64_encode(flat) << '\n';
  }
  for (std::size_t g = 0; g < m.clusters; ++g)
    for (std::size_t d = 0; d < m.features; ++d) {
      const auto& k = m.kde(g, d);
      const std::string key = "kde." + std::to_string(g) + "." + std::to_string(d);
      out << key << ".bandwidth " << format_double(k.bandwidth()) << '\n';
      out << key << ".initial_bandwidth " << format_double(m.initial_bandwidths[g * m.features + d]) << '\n';
      out << key << ".points " << base64_encode({k.points().begin(), k.points().end()}) << '\n';
      out << key << ".weights " << base64_encode({k.weights().begin(), k.weights().end()}) << '\n';
    }
}

CkmmModel read_model(std::istream& in, const std::string& source) {
  std::string line;
  if (!getline_clean(in, line) || line != "ckmm-model") {
    throw Error(ErrorCode::format, at_line(source, 1) + "not a model file");
  }
  std::map<std::string, std::string> kv;
  for (std::size_t lineno = 2; getline_clean(in, line); ++lineno) {
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw Error(ErrorCode::format, at_line(source, lineno) + "expected 'key value'");
    if (!kv.emplace(line.substr(0, sp), line.substr(sp + 1)).second) {
      throw Error(ErrorCode::format, at_line(source, lineno) + "duplicate key " + line.substr(0, sp));
    }
  }
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::format, source + ": missing key " + key);
    return it->second;
  };
  auto count = [&](const std::string& key) {
    const auto v = parse_index(get(key));
    if (!v) throw Error(ErrorCode::format, source + ": key " + key + " is not a count");
    return *v;
  };
  auto real = [&](const std::string& key) {
    try {
      return parse_double(get(key));
    } catch (const Error&) {
      throw Error(ErrorCode::format, source + ": key " + key + " is not a number");
    }
  };
  auto array = [&](const std::string& key, std::size_t expected) {
    auto v = base64_decode(get(key));
    if (v.size() != expected) throw Error(ErrorCode::format, source + ": key " + key + " has the wrong length");
    return v;
  };
  if (count("version") != static_cast<std::size_t>(kModelFormatVersion)) {
    throw Error(ErrorCode::format, source + ": unsupported model format version " + get("version"));
  }
  CkmmModel m;
  m.clusters = count("clusters");
  m.features = count("features");
  m.times = count("times");
  if (m.clusters == 0 || m.features == 0 || m.times == 0) throw Error(ErrorCode::format, source + ": empty model");
  auto& c = m.config;
  c.epsilon = real("config.epsilon");
  c.max_iterations = count("config.max_iterations");
  c.restarts = count("config.restarts");
  c.eta = real("config.eta");
  c.delta_h = real("config.delta_h");
  c.bandwidth_lower = real("config.bandwidth_lower");
  c.bandwidth_upper = real("config.bandwidth_upper");
  c.max_bandwidth_substeps = count("config.max_bandwidth_substeps");
  c.kmeans_seedings = count("config.kmeans_seedings");
  c.seed = count("config.seed");
  c.ridge = real("config.ridge");
  m.pis = array("pis", m.clusters);
  const auto dim = static_cast<Eigen::Index>(m.features);
  for (std::size_t g = 0; g < m.clusters; ++g) {
    const std::string key = "corr." + std::to_string(g);
    const auto flat = array(key + ".blocks", m.times * m.features * m.features * 2);
    SpectralCorrelation corr{m.times, m.features, {}, real(key + ".ridge"), {}};
    std::size_t k = 0;
    for (std::size_t j = 0; j < m.times; ++j) {
      Eigen::MatrixXcd b(dim, dim);
      for (Eigen::Index r = 0; r < dim; ++r)
        for (Eigen::Index s = 0; s < dim; ++s, k += 2) b(r, s) = Complex(flat[k], flat[k + 1]);
      corr.blocks.push_back(std::move(b));
    }
    m.corr.push_back(std::move(corr));
  }
  for (std::size_t g = 0; g < m.clusters; ++g)
    for (std::size_t d = 0; d < m.features; ++d) {
      const std::string key = "kde." + std::to_string(g) + "." + std::to_string(d);
      auto weights = base64_decode(get(key + ".weights"));
      const auto points = array(key + ".points", weights.size() * m.times);
      m.kdes.emplace_back(points, weights, real(key + ".bandwidth"));
      m.initial_bandwidths.push_back(real(key + ".initial_bandwidth"));
    }
  return m;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << content;
  if (!out.flush()) throw Error(ErrorCode::io, "write failed for " + path.string());
}

}  // namespace ckmm
