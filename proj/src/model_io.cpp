#include "tpspline/model_io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace tps {

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

double parse_real(const std::string& field, const std::string& tok) {
  double v = 0;
  const char* end = tok.data() + tok.size();
  const auto res = std::from_chars(tok.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw FormatError(field, "not a number: '" + tok + "'");
  return v;
}

long parse_int(const std::string& field, const std::string& tok) {
  long v = 0;
  const char* end = tok.data() + tok.size();
  const auto res = std::from_chars(tok.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw FormatError(field, "not an integer: '" + tok + "'");
  return v;
}

void write_rows(std::ostream& out, const char* name, const Points<double>& p) {
  out << name << ' ' << p.rows() << '\n';
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) out << (j ? " " : "") << fmt(p(i, j));
    out << '\n';
  }
}

void write_vector(std::ostream& out, const char* name, const Vector<double>& v) {
  out << name << ' ' << v.size() << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << fmt(v(i)) << '\n';
}

// Line cursor that skips blanks and '#' comments.
class Lines {
public:
  explicit Lines(const std::string& doc) {
    std::istringstream in(doc);
    for (std::string line; std::getline(in, line);) {
      auto toks = split(line);
      if (toks.empty() || toks[0][0] == '#') continue;
      lines_.push_back(std::move(toks));
    }
  }
  bool done() const { return pos_ >= lines_.size(); }
  const std::vector<std::string>& next(const std::string& field) {
    if (done()) throw FormatError(field, "unexpected end of document");
    return lines_[pos_++];
  }

private:
  std::vector<std::vector<std::string>> lines_;
  std::size_t pos_ = 0;
};

Matrix<double> read_block(Lines& lines, const std::string& field, long rows, long cols) {
  if (rows < 0) throw FormatError(field, "negative row count");
  Matrix<double> out(rows, cols);
  for (long i = 0; i < rows; ++i) {
    const auto& toks = lines.next(field);
    if (static_cast<long>(toks.size()) != cols)
      throw FormatError(field, "row " + std::to_string(i) + " has " + std::to_string(toks.size()) + " values, expected " +
                                   std::to_string(cols));
    for (long j = 0; j < cols; ++j) out(i, j) = parse_real(field, toks[j]);
  }
  return out;
}

}  // namespace

std::string serialize(const SplineModel<double>& model) {
  const auto& setup = model.setup();
  std::ostringstream out;
  out << "version " << kModelFormatVersion << '\n';
  out << "m " << setup.m() << '\n';
  out << "d " << setup.d() << '\n';
  out << "domain " << fmt(setup.domain.lo) << ' ' << fmt(setup.domain.hi) << '\n';
  out << "lambda " << fmt(model.lambda()) << '\n';
  out << "j_value " << fmt(model.fit_roughness()) << '\n';
  out << "en_value " << fmt(model.fit_residual()) << '\n';
  write_rows(out, "anchors", setup.kernel.anchors.points);
  Points<double> knots = model.knots();
  if (knots.rows() == 0) knots.resize(0, setup.d());
  write_rows(out, "knots", knots);
  write_vector(out, "poly_coeffs", model.poly_coeffs());
  write_vector(out, "kernel_coeffs", model.kernel_coeffs());
  return out.str();
}

SplineModel<double> deserialize(const std::string& document) {
  Lines lines(document);
  std::map<std::string, std::vector<std::string>> header;
  std::map<std::string, Matrix<double>> blocks;
  long m = -1, d = -1;
  const std::vector<std::string> scalar_keys = {"version", "m", "d", "domain", "lambda", "j_value", "en_value"};
  const std::vector<std::string> block_keys = {"anchors", "knots", "poly_coeffs", "kernel_coeffs"};

  while (!lines.done()) {
    const auto toks = lines.next("document");
    const std::string& key = toks[0];
    if (header.count(key) || blocks.count(key)) throw FormatError(key, "duplicate field");
    if (std::find(scalar_keys.begin(), scalar_keys.end(), key) != scalar_keys.end()) {
      const std::size_t want = key == "domain" ? 3 : 2;
      if (toks.size() != want) throw FormatError(key, "expected " + std::to_string(want - 1) + " value(s)");
      if (key == "version" && toks[1] != kModelFormatVersion) throw VersionError(toks[1]);
      if (key == "m") m = parse_int(key, toks[1]);
      if (key == "d") d = parse_int(key, toks[1]);
      header[key] = toks;
    } else if (std::find(block_keys.begin(), block_keys.end(), key) != block_keys.end()) {
      if (toks.size() != 2) throw FormatError(key, "expected a row count");
      if (header.count("version") == 0) throw FormatError("version", "missing (must precede data blocks)");
      if (d < 1) throw FormatError("d", "missing or invalid (must precede data blocks)");
      const long rows = parse_int(key, toks[1]);
      const bool points = key == "anchors" || key == "knots";
      blocks[key] = read_block(lines, key, rows, points ? d : 1);
    } else {
      throw FormatError(key, "unknown field");
    }
  }
  for (const auto& k : scalar_keys)
    if (!header.count(k)) throw FormatError(k, "missing");
  for (const auto& k : block_keys)
    if (!blocks.count(k)) throw FormatError(k, "missing");
  if (m < 1) throw FormatError("m", "must be a positive integer");

  const Box<double> domain{parse_real("domain", header["domain"][1]), parse_real("domain", header["domain"][2])};
  if (!(domain.lo < domain.hi)) throw FormatError("domain", "lo must be below hi");
  const double lambda = parse_real("lambda", header["lambda"][1]);
  const double jv = parse_real("j_value", header["j_value"][1]);
  const double ev = parse_real("en_value", header["en_value"][1]);

  Points<double> anchors = blocks["anchors"];
  if (anchors.rows() != basis_dimension(static_cast<int>(m), static_cast<int>(d)))
    throw FormatError("anchors", "count does not match the polynomial basis");
  SplineSetup<double> setup = [&] {
    try {
      return make_setup(static_cast<int>(m), domain, std::move(anchors));
    } catch (const UnisolvencyError& e) {
      throw FormatError("anchors", e.what());
    } catch (const std::domain_error& e) {
      throw FormatError("m", e.what());
    }
  }();
  Vector<double> c = blocks["poly_coeffs"].col(0);
  Vector<double> dk = blocks["kernel_coeffs"].col(0);
  if (c.size() != setup.basis_size()) throw FormatError("poly_coeffs", "count does not match the polynomial basis");
  if (dk.size() != blocks["knots"].rows()) throw FormatError("kernel_coeffs", "count does not match knots");
  return SplineModel<double>(std::move(setup), blocks["knots"], std::move(c), std::move(dk), lambda, jv, ev);
}

void save_model(const SplineModel<double>& model, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out << serialize(model);
    out.flush();
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

SplineModel<double> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace tps
