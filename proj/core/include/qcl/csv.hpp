#pragma once

// Plot-ready CSV with a '#'-prefixed metadata block. Numbers use the
// shortest round-trip representation so reruns are byte-identical.

#include <initializer_list>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qcl::csv {

using Metadata = std::vector<std::pair<std::string, std::string>>;

std::string format_number(double v);

// Writes "# key: value" lines; embedded newlines continue on new '#' lines.
void write_metadata(std::ostream& os, const Metadata& meta);

void write_header(std::ostream& os, std::initializer_list<std::string_view> columns);
void write_header(std::ostream& os, std::span<const std::string> columns);

void write_row(std::ostream& os, std::initializer_list<double> values);
void write_row(std::ostream& os, std::span<const double> values);

// Row whose last column is a text tag.
void write_row(std::ostream& os, std::initializer_list<double> values, std::string_view tag);

}  // namespace qcl::csv
