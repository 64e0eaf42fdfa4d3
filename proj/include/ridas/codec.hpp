#pragma once

#include <cstdint>
#include <vector>

#include "ridas/svid.hpp"

namespace ridas::codec {

/// RDA tuning knob: decomposition rank and quantization bit depth.
struct ControlParameter {
    int rank = 1;
    int qbits = 8;

    bool operator==(const ControlParameter&) const = default;
    /// (rank, qbits) lexicographic order, used for experience-table sorting.
    bool operator<(const ControlParameter& o) const {
        return rank != o.rank ? rank < o.rank : qbits < o.qbits;
    }
};

/// Throws InvalidInputError unless rank >= 1 and qbits in [1, 16].
void validate(const ControlParameter& theta);

/// Uniform min-max scalar quantization of a real sequence.
/// step = (max - min) / (2^q - 1), or 0 for constant input.
struct QuantizedBlock {
    std::vector<std::uint32_t> symbols;
    double offset = 0.0;
    double step = 0.0;
    int qbits = 1;
};

QuantizedBlock quantize(const std::vector<double>& values, int qbits);
std::vector<double> dequantize(const QuantizedBlock& block);

/// Entropy-coded symbol section. mode 0 = canonical Huffman with a
/// code-length table, mode 1 = raw q bits per symbol (fallback when the
/// coded size including the table would not beat raw).
struct CodedSection {
    std::uint32_t count = 0;
    std::uint8_t mode = 0;
    std::vector<std::uint8_t> code_lengths; // per symbol 0..table_len-1, mode 0 only
    std::uint32_t payload_bits = 0;
    std::vector<std::uint8_t> payload; // byte-padded, MSB-first
    int qbits = 1;
};

CodedSection entropy_encode(const std::vector<std::uint32_t>& symbols, int qbits);
std::vector<std::uint32_t> entropy_decode(const CodedSection& section);

/// Serialized representation payload. total_bits() is the transmission rate.
struct BitStream {
    std::vector<std::uint8_t> bytes;

    std::uint64_t total_bits() const { return static_cast<std::uint64_t>(bytes.size()) * 8; }
    bool operator==(const BitStream&) const = default;
};

struct StreamHeader {
    std::uint32_t m = 0;
    std::uint32_t n = 0;
    std::uint16_t r = 0;
    std::uint8_t q = 0;
    std::uint8_t flags = 0;
};

/// Packs SVID factors: header, raw sign bitmap (1 bit per entry, row-major,
/// MSB-first, +1 -> 1), then entropy-coded U, diag(Sigma), V sections, each
/// quantized independently with q bits.
BitStream pack_stream(const svid::SvidFactors& factors, int qbits);

/// Inverse of pack_stream; sign matrix is exact, factors are dequantized.
svid::SvidFactors unpack_stream(const BitStream& stream);

/// Header decode without unpacking the payload.
StreamHeader read_header(const BitStream& stream);

namespace detail {
/// Huffman code lengths for the observed frequencies (canonical assignment is
/// derived from lengths alone). Exposed for direct testing.
std::vector<std::uint8_t> huffman_code_lengths(const std::vector<std::uint64_t>& freq);
} // namespace detail

} // namespace ridas::codec
