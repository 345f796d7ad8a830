#include "decompound/io.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "decompound/error.hpp"

namespace decompound::io {

namespace {

void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    parts.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw InputError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &length) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw NumericalError("SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    const unsigned char c = digest[i];
    out += hex[c >> 4];
    out += hex[c & 15];
  }
  return out;
}

std::string format_increments_csv(const IncrementSample& sample) {
  std::string out;
  for (std::size_t a = 0; a < sample.dim; ++a) {
    if (a) out += ',';
    out += "z" + std::to_string(a + 1);
  }
  out += '\n';
  for (std::size_t i = 0; i < sample.size(); ++i) {
    for (std::size_t a = 0; a < sample.dim; ++a) {
      if (a) out += ',';
      append_number(out, sample.at(i)[a]);
    }
    out += '\n';
  }
  return out;
}

IncrementSample parse_increments_csv(std::string_view text, double mesh) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw InputError("increment CSV is empty; expected a z1,...,zd header");
  const auto header = split(trim(line), ',');
  for (std::size_t a = 0; a < header.size(); ++a) {
    if (trim(header[a]) != "z" + std::to_string(a + 1)) throw InputError("increment CSV header must be z1,...,zd");
  }
  const std::size_t dim = header.size();
  std::vector<double> z;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != dim) throw InputError("row " + std::to_string(row) + " has the wrong number of columns");
    for (const auto& cell : cells) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(trim(cell), &used);
      } catch (const std::exception&) {
        throw InputError("row " + std::to_string(row) + " has a non-numeric value");
      }
      if (used != trim(cell).size() || !std::isfinite(v))
        throw InputError("row " + std::to_string(row) + " has an invalid value");
      z.push_back(v);
    }
  }
  return IncrementSample(dim, mesh, std::move(z));
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::string format_density_csv(const DensityBand& band) {
  std::string out = band.grid.dim == 1 ? "x1,mean,lower,upper\n" : "x1,x2,mean,lower,upper\n";
  const auto points = band.grid.points();
  for (std::size_t i = 0; i < band.grid.size(); ++i) {
    for (std::size_t a = 0; a < band.grid.dim; ++a) {
      append_number(out, points[i * band.grid.dim + a]);
      out += ',';
    }
    append_number(out, band.mean[i]);
    out += ',';
    append_number(out, band.lower[i]);
    out += ',';
    append_number(out, band.upper[i]);
    out += '\n';
  }
  return out;
}

std::string format_chain_jsonl(const ChainOutput& output) {
  std::string out;
  for (const auto& s : output.states) {
    const nlohmann::json j = {{"iter", s.iter},
                              {"lambda", s.lambda},
                              {"jump_count_total", s.jump_count_total},
                              {"mixture", s.mixture},
                              {"log_post", s.log_post}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace decompound::io
