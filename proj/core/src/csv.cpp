#include "qcl/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>

namespace qcl::csv {

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

void write_metadata(std::ostream& os, const Metadata& meta) {
    for (const auto& [key, value] : meta) {
        os << "# " << key << ":";
        std::string_view rest = value;
        bool first = true;
        while (true) {
            const auto nl = rest.find('\n');
            const std::string_view line = rest.substr(0, nl);
            if (first) {
                os << ' ' << line << '\n';
                first = false;
            } else {
                os << "#   " << line << '\n';
            }
            if (nl == std::string_view::npos) break;
            rest.remove_prefix(nl + 1);
            if (rest.empty()) break;
        }
    }
}

namespace {
template <class Range>
void join(std::ostream& os, const Range& r) {
    bool first = true;
    for (const auto& c : r) {
        if (!first) os << ',';
        os << c;
        first = false;
    }
}
}  // namespace

void write_header(std::ostream& os, std::initializer_list<std::string_view> columns) {
    join(os, columns);
    os << '\n';
}

void write_header(std::ostream& os, std::span<const std::string> columns) {
    join(os, columns);
    os << '\n';
}

void write_row(std::ostream& os, std::span<const double> values) {
    bool first = true;
    for (double v : values) {
        if (!first) os << ',';
        os << format_number(v);
        first = false;
    }
    os << '\n';
}

void write_row(std::ostream& os, std::initializer_list<double> values) {
    write_row(os, std::span<const double>(values.begin(), values.size()));
}

void write_row(std::ostream& os, std::initializer_list<double> values, std::string_view tag) {
    for (double v : values) os << format_number(v) << ',';
    os << tag << '\n';
}

}  // namespace qcl::csv
