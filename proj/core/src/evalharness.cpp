#include "latentmark/evalharness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "latentmark/error.hpp"
#include "latentmark/parallel.hpp"
#include "latentmark/rng.hpp"
#include "latentmark/watermark.hpp"

namespace latentmark {
namespace {

constexpr std::uint64_t kChunk = 1 << 16;

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("number formatting failed");
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("bad number '" + s + "' in report");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::vector<AttackSpec> default_attack_grid() {
  std::vector<AttackSpec> grid;
  for (const char* s : {"identity", "rotation:25", "crop:0.5", "crop:0.1", "resize:0.7", "blur:2",
                        "jpeg:50", "brightness:2", "contrast:2", "hue:0.25"}) {
    grid.push_back(AttackSpec::parse(s));
  }
  return grid;
}

EvalTable evaluate_zero_bit(const FeatureModel& model, const std::vector<Image>& marked, const ZeroBitKey& key,
                            double theta, const std::vector<AttackSpec>& attacks, int jobs) {
  if (marked.empty()) throw InvalidArgument("empty corpus");
  for (const auto& a : attacks) a.validate();
  const std::size_t n = marked.size();
  std::vector<char> hits(n * attacks.size(), 0);
  parallel_for(hits.size(), jobs, [&](std::size_t idx) {
    const std::size_t img = idx / attacks.size();
    const std::size_t atk = idx % attacks.size();
    hits[idx] = detect(model, attack(marked[img], attacks[atk]), key, theta).detected ? 1 : 0;
  });
  EvalTable table;
  for (std::size_t a = 0; a < attacks.size(); ++a) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) count += hits[i * attacks.size() + a];
    table.push_back({attacks[a], "tpr", static_cast<double>(count) / n, n});
  }
  return table;
}

EvalTable evaluate_multi_bit(const FeatureModel& model, const std::vector<Image>& marked, const MultiBitKey& key,
                             const std::vector<Message>& messages, const std::vector<AttackSpec>& attacks, int jobs) {
  if (marked.empty()) throw InvalidArgument("empty corpus");
  if (messages.size() != marked.size()) throw InvalidArgument("one message per marked image is required");
  for (const auto& m : messages) {
    if (m.size() != key.k) throw InvalidArgument("message length does not match key");
  }
  for (const auto& a : attacks) a.validate();
  const std::size_t n = marked.size();
  std::vector<int> errors(n * attacks.size(), 0);
  parallel_for(errors.size(), jobs, [&](std::size_t idx) {
    const std::size_t img = idx / attacks.size();
    const std::size_t atk = idx % attacks.size();
    const Message got = decode(model, attack(marked[img], attacks[atk]), key);
    int e = 0;
    for (int b = 0; b < key.k; ++b) e += got.bits[b] != messages[img].bits[b];
    errors[idx] = e;
  });
  EvalTable table;
  for (std::size_t a = 0; a < attacks.size(); ++a) {
    std::size_t bit_errors = 0;
    std::size_t word_errors = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int e = errors[i * attacks.size() + a];
      bit_errors += e;
      word_errors += e > 0;
    }
    const double ber = static_cast<double>(bit_errors) / (static_cast<double>(n) * key.k);
    const double wer = static_cast<double>(word_errors) / n;
    const double iid = 1.0 - std::pow(1.0 - ber, key.k);
    table.push_back({attacks[a], "ber", ber, n});
    table.push_back({attacks[a], "wer", wer, n});
    table.push_back({attacks[a], "wer_iid", iid, n});
    table.push_back({attacks[a], "wer_below_iid", wer < iid ? 1.0 : 0.0, n});
  }
  return table;
}

double monte_carlo_fpr(int d, double theta, std::uint64_t n, std::uint64_t seed, int jobs) {
  if (d < 2) throw InvalidArgument("dimension must be at least 2");
  if (n < 1) throw InvalidArgument("sample count must be at least 1");
  const ZeroBitKey key = gen_zero_bit_key(seed, d);
  const double c = std::cos(theta);
  const std::uint64_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<std::uint64_t> hits(chunks, 0);
  parallel_for(chunks, jobs, [&](std::size_t chunk) {
    CounterRng rng(seed, 0x4d43000000000000ULL + chunk);
    const std::uint64_t begin = chunk * kChunk;
    const std::uint64_t end = std::min(n, begin + kChunk);
    std::vector<double> u(d);
    std::uint64_t count = 0;
    for (std::uint64_t s = begin; s < end; ++s) {
      double proj = 0.0;
      double norm2 = 0.0;
      for (int j = 0; j < d; ++j) {
        const double g = rng.normal();
        proj += g * key.carrier[j];
        norm2 += g * g;
      }
      if (std::fabs(proj) > std::sqrt(norm2) * c) ++count;
    }
    hits[chunk] = count;
  });
  std::uint64_t total = 0;
  for (auto h : hits) total += h;
  return static_cast<double>(total) / static_cast<double>(n);
}

std::string format_report(const EvalTable& table) {
  std::string out = "attack,param,metric,value,n\n";
  for (const auto& row : table) {
    out += row.attack.name() + "," + format_double(row.attack.param) + "," + row.metric + "," +
           format_double(row.value) + "," + std::to_string(row.n) + "\n";
  }
  return out;
}

void write_report(const EvalTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const auto text = format_report(table);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

EvalTable parse_report(const std::string& csv) {
  std::stringstream ss(csv);
  std::string line;
  if (!std::getline(ss, line) || line != "attack,param,metric,value,n") {
    throw FormatError("report is missing the header line");
  }
  EvalTable table;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) throw FormatError("report row must have 5 fields: '" + line + "'");
    EvalRow row;
    row.attack = f[0] == "identity" ? AttackSpec{} : AttackSpec::parse(f[0] + ":" + f[1]);
    row.metric = f[2];
    row.value = parse_double(f[3]);
    row.n = static_cast<std::size_t>(parse_double(f[4]));
    table.push_back(std::move(row));
  }
  return table;
}

EvalTable read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_report(ss.str());
}

void write_svg_plot(const EvalTable& table, const std::string& metric, const std::filesystem::path& path) {
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (const auto& row : table) {
    if (row.metric == metric) series[row.attack.name()].emplace_back(row.attack.param, row.value);
  }
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 150, kTop = 30, kBottom = 50;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ostringstream svg;
  svg.imbue(std::locale::classic());
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << metric
      << " vs attack parameter</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = kTop + ph * (1.0 - t / 4.0);
    svg << "<text x=\"" << kLeft - 35 << "\" y=\"" << y + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << t / 4.0 << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 - 60 << "\" y=\"" << kH - 12
      << "\" font-family=\"sans-serif\" font-size=\"12\">parameter (normalized per attack)</text>\n";
  int index = 0;
  for (auto& [name, points] : series) {
    std::sort(points.begin(), points.end());
    const double lo = points.front().first;
    const double hi = points.back().first;
    const char* color = kColors[index % 10];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : points) {
      const double fx = hi > lo ? (x - lo) / (hi - lo) : 0.5;
      svg << kLeft + fx * pw << "," << kTop + ph * (1.0 - std::clamp(y, 0.0, 1.0)) << " ";
    }
    svg << "\"/>\n";
    for (const auto& [x, y] : points) {
      const double fx = hi > lo ? (x - lo) / (hi - lo) : 0.5;
      svg << "<circle cx=\"" << kLeft + fx * pw << "\" cy=\"" << kTop + ph * (1.0 - std::clamp(y, 0.0, 1.0))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    svg << "<text x=\"" << kLeft + pw + 10 << "\" y=\"" << kTop + 16 * index + 10 << "\" fill=\"" << color
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << name << " [" << lo << ", " << hi
        << "]</text>\n";
    ++index;
  }
  svg << "</svg>\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << svg.str();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace latentmark
