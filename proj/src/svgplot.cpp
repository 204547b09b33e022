#include "dg/svgplot.hpp"

#include <cstdio>
#include <sstream>

#include "dg/tensor.hpp"

namespace dg {

namespace {

constexpr double kW = 640, kH = 400;
constexpr double kL = 60, kR = 20, kT = 30, kB = 50;  // margins

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

double x_of(int64_t k, int64_t kmin, int64_t kmax) {
  const double span = kmax > kmin ? static_cast<double>(kmax - kmin) : 1.0;
  return kL + (kW - kL - kR) * (static_cast<double>(k - kmin) / span);
}

double y_of(double acc) { return kT + (kH - kT - kB) * (1.0 - acc); }

void polyline(std::ostringstream& out, const std::vector<int64_t>& ks,
              const std::vector<double>& acc, int64_t kmin, int64_t kmax, const char* color) {
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
  for (size_t i = 0; i < ks.size(); ++i) {
    if (i) out << " ";
    out << num(x_of(ks[i], kmin, kmax)) << "," << num(y_of(acc[i]));
  }
  out << "\"/>\n";
  for (size_t i = 0; i < ks.size(); ++i) {
    out << "<circle cx=\"" << num(x_of(ks[i], kmin, kmax)) << "\" cy=\"" << num(y_of(acc[i]))
        << "\" r=\"3\" fill=\"" << color << "\"/>\n";
  }
}

}  // namespace

std::string accuracy_curve_svg(const std::vector<int64_t>& ks, const std::vector<double>& acc25,
                               const std::vector<double>& acc50) {
  require(!ks.empty(), "svg: no points");
  require(ks.size() == acc25.size() && ks.size() == acc50.size(), "svg: length mismatch");
  const int64_t kmin = ks.front(), kmax = ks.back();

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  out << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(kW / 2) << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">accuracy vs sentences per paragraph"
      << "</text>\n";

  for (int i = 0; i <= 4; ++i) {
    const double a = 0.25 * i;
    const double y = y_of(a);
    out << "<line x1=\"" << num(kL) << "\" y1=\"" << num(y) << "\" x2=\"" << num(kW - kR)
        << "\" y2=\"" << num(y) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << num(kL - 8) << "\" y=\"" << num(y + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(a)
        << "</text>\n";
  }
  for (int64_t k : ks) {
    const double x = x_of(k, kmin, kmax);
    out << "<line x1=\"" << num(x) << "\" y1=\"" << num(kH - kB) << "\" x2=\"" << num(x)
        << "\" y2=\"" << num(kH - kB + 5) << "\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << num(x) << "\" y=\"" << num(kH - kB + 20)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << k
        << "</text>\n";
  }
  out << "<line x1=\"" << num(kL) << "\" y1=\"" << num(kT) << "\" x2=\"" << num(kL) << "\" y2=\""
      << num(kH - kB) << "\" stroke=\"#444\"/>\n";
  out << "<line x1=\"" << num(kL) << "\" y1=\"" << num(kH - kB) << "\" x2=\"" << num(kW - kR)
      << "\" y2=\"" << num(kH - kB) << "\" stroke=\"#444\"/>\n";
  out << "<text x=\"" << num(kW / 2) << "\" y=\"" << num(kH - 12)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">K</text>\n";

  polyline(out, ks, acc25, kmin, kmax, "#1f6fb2");
  polyline(out, ks, acc50, kmin, kmax, "#c24a1f");

  out << "<rect x=\"" << num(kW - kR - 150) << "\" y=\"" << num(kT + 6)
      << "\" width=\"140\" height=\"40\" fill=\"white\" stroke=\"#ccc\"/>\n";
  out << "<line x1=\"" << num(kW - kR - 142) << "\" y1=\"" << num(kT + 19) << "\" x2=\""
      << num(kW - kR - 118) << "\" y2=\"" << num(kT + 19)
      << "\" stroke=\"#1f6fb2\" stroke-width=\"2\"/>\n";
  out << "<text x=\"" << num(kW - kR - 112) << "\" y=\"" << num(kT + 23)
      << "\" font-family=\"sans-serif\" font-size=\"11\">Acc@0.25</text>\n";
  out << "<line x1=\"" << num(kW - kR - 142) << "\" y1=\"" << num(kT + 35) << "\" x2=\""
      << num(kW - kR - 118) << "\" y2=\"" << num(kT + 35)
      << "\" stroke=\"#c24a1f\" stroke-width=\"2\"/>\n";
  out << "<text x=\"" << num(kW - kR - 112) << "\" y=\"" << num(kT + 39)
      << "\" font-family=\"sans-serif\" font-size=\"11\">Acc@0.5</text>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace dg
