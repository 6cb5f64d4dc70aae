#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace istanet::io {

// Little-endian primitives for the on-disk formats. Every format starts
// with a four-character magic; readers throw InputError on mismatch or
// truncation.

void write_magic(std::ostream& os, const char (&magic)[5]);
void expect_magic(std::istream& is, const char (&magic)[5], const std::string& what);

void write_u8(std::ostream& os, std::uint8_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
void write_f64s(std::ostream& os, std::span<const double> v);

std::uint8_t read_u8(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
void read_f64s(std::istream& is, std::span<double> out);

// Row-major matrix payloads.
void write_matrix(std::ostream& os, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(std::istream& is, Eigen::Index rows, Eigen::Index cols);

// Column-major payloads: column j is contiguous (one block per column).
void write_columns(std::ostream& os, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_columns(std::istream& is, Eigen::Index rows, Eigen::Index cols);

std::vector<char> read_file(const std::string& path);

}  // namespace istanet::io
