#include "ridas/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <queue>
#include <string>

#include "ridas/errors.hpp"

namespace ridas::codec {

namespace {

constexpr char kMagic[4] = {'R', 'D', 'B', '1'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kModeHuffman = 0;
constexpr std::uint8_t kModeRaw = 1;
constexpr int kMaxCodeLen = 64;

// ---------------------------------------------------------------- byte I/O

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        double v = 0.0;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    std::vector<std::uint8_t> raw(std::size_t count) {
        need(count);
        std::vector<std::uint8_t> v(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                    bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + count));
        pos_ += count;
        return v;
    }

private:
    void need(std::size_t count) {
        if (pos_ + count > bytes_.size()) {
            throw DecodeError("truncated stream", pos_);
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

// ----------------------------------------------------------------- bit I/O

class BitWriter {
public:
    // MSB-first within each byte
    void put_bits(std::uint64_t value, int count) {
        for (int i = count - 1; i >= 0; --i) put_bit(static_cast<int>((value >> i) & 1));
    }
    void put_bit(int b) {
        cur_ = static_cast<std::uint8_t>((cur_ << 1) | (b & 1));
        if (++nbits_ == 8) {
            bytes_.push_back(cur_);
            cur_ = 0;
            nbits_ = 0;
        }
    }
    std::vector<std::uint8_t> finish() {
        if (nbits_ > 0) {
            bytes_.push_back(static_cast<std::uint8_t>(cur_ << (8 - nbits_)));
            cur_ = 0;
            nbits_ = 0;
        }
        return std::move(bytes_);
    }

private:
    std::vector<std::uint8_t> bytes_;
    std::uint8_t cur_ = 0;
    int nbits_ = 0;
};

class BitReader {
public:
    BitReader(const std::vector<std::uint8_t>& bytes, std::size_t base_offset)
        : bytes_(bytes), base_(base_offset) {}

    int get_bit() {
        const std::size_t byte = pos_ >> 3;
        if (byte >= bytes_.size()) {
            throw DecodeError("bit payload exhausted", base_ + byte);
        }
        const int bit = (bytes_[byte] >> (7 - (pos_ & 7))) & 1;
        ++pos_;
        return bit;
    }
    std::uint64_t get_bits(int count) {
        std::uint64_t v = 0;
        for (int i = 0; i < count; ++i) v = (v << 1) | static_cast<std::uint64_t>(get_bit());
        return v;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t base_ = 0;
    std::size_t pos_ = 0;
};

// -------------------------------------------------------- canonical Huffman

struct CanonicalCodes {
    std::vector<std::uint32_t> symbols;     // sorted by (length, symbol)
    std::vector<std::uint32_t> count_by_len; // index = length
    std::vector<std::uint64_t> first_code;   // canonical first code per length
    std::vector<std::uint32_t> first_index;  // offset into symbols per length
    int max_len = 0;
};

CanonicalCodes canonicalize(const std::vector<std::uint8_t>& lengths) {
    CanonicalCodes c;
    for (std::uint8_t len : lengths) c.max_len = std::max(c.max_len, static_cast<int>(len));
    c.count_by_len.assign(static_cast<std::size_t>(c.max_len) + 1, 0);
    for (std::uint32_t sym = 0; sym < lengths.size(); ++sym) {
        if (lengths[sym] > 0) ++c.count_by_len[lengths[sym]];
    }
    c.first_code.assign(static_cast<std::size_t>(c.max_len) + 1, 0);
    c.first_index.assign(static_cast<std::size_t>(c.max_len) + 1, 0);
    std::uint64_t code = 0;
    std::uint32_t index = 0;
    for (int len = 1; len <= c.max_len; ++len) {
        code = (code + c.count_by_len[len - 1]) << 1;
        c.first_code[len] = code;
        c.first_index[len] = index;
        index += c.count_by_len[len];
        code += 0; // codes for this length start at first_code[len]
    }
    // reuse: walk lengths in symbol order, grouped by length
    c.symbols.resize(index);
    std::vector<std::uint32_t> next = c.first_index;
    for (std::uint32_t sym = 0; sym < lengths.size(); ++sym) {
        if (lengths[sym] > 0) c.symbols[next[lengths[sym]]++] = sym;
    }
    return c;
}

// Kraft sum in units of 2^-max_len; > 2^max_len means an over-subscribed,
// undecodable table.
bool kraft_ok(const CanonicalCodes& c) {
    if (c.max_len == 0) return true;
    if (c.max_len > kMaxCodeLen) return false;
    long double sum = 0.0L;
    for (int len = 1; len <= c.max_len; ++len) {
        sum += static_cast<long double>(c.count_by_len[len]) * std::pow(2.0L, -len);
    }
    return sum <= 1.0L + 1e-18L;
}

std::vector<std::uint64_t> assign_codes(const std::vector<std::uint8_t>& lengths,
                                        const CanonicalCodes& c) {
    std::vector<std::uint64_t> codes(lengths.size(), 0);
    std::vector<std::uint64_t> next(c.first_code);
    for (std::uint32_t i = 0; i < c.symbols.size(); ++i) {
        const std::uint32_t sym = c.symbols[i];
        codes[sym] = next[lengths[sym]]++;
    }
    return codes;
}

std::size_t distinct_count(const std::vector<std::uint8_t>& lengths) {
    std::size_t n = 0;
    for (std::uint8_t len : lengths)
        if (len > 0) ++n;
    return n;
}

} // namespace

namespace detail {

std::vector<std::uint8_t> huffman_code_lengths(const std::vector<std::uint64_t>& freq) {
    std::vector<std::uint8_t> lengths(freq.size(), 0);
    std::vector<std::uint32_t> leaves;
    for (std::uint32_t sym = 0; sym < freq.size(); ++sym) {
        if (freq[sym] > 0) leaves.push_back(sym);
    }
    if (leaves.empty()) return lengths;
    if (leaves.size() == 1) {
        lengths[leaves[0]] = 1;
        return lengths;
    }

    struct Node {
        std::uint64_t count;
        std::uint32_t id;
    };
    auto cmp = [](const Node& a, const Node& b) {
        return a.count != b.count ? a.count > b.count : a.id > b.id;
    };
    std::priority_queue<Node, std::vector<Node>, decltype(cmp)> heap(cmp);

    std::vector<std::int32_t> parent(leaves.size() * 2 - 1, -1);
    for (std::uint32_t i = 0; i < leaves.size(); ++i) heap.push({freq[leaves[i]], i});

    std::uint32_t next_id = static_cast<std::uint32_t>(leaves.size());
    while (heap.size() > 1) {
        const Node a = heap.top();
        heap.pop();
        const Node b = heap.top();
        heap.pop();
        parent[a.id] = static_cast<std::int32_t>(next_id);
        parent[b.id] = static_cast<std::int32_t>(next_id);
        heap.push({a.count + b.count, next_id});
        ++next_id;
    }

    for (std::uint32_t i = 0; i < leaves.size(); ++i) {
        int depth = 0;
        for (std::int32_t node = parent[i]; node >= 0; node = parent[node]) ++depth;
        lengths[leaves[i]] = static_cast<std::uint8_t>(depth);
    }
    return lengths;
}

} // namespace detail

void validate(const ControlParameter& theta) {
    if (theta.rank < 1) throw InvalidRankError("rank must be >= 1");
    if (theta.qbits < 1 || theta.qbits > 16) {
        throw InvalidInputError("qbits must be in [1, 16]");
    }
}

QuantizedBlock quantize(const std::vector<double>& values, int qbits) {
    if (qbits < 1 || qbits > 16) throw InvalidInputError("qbits must be in [1, 16]");
    for (double v : values) {
        if (!std::isfinite(v)) throw InvalidInputError("quantize: non-finite entry");
    }
    QuantizedBlock block;
    block.qbits = qbits;
    if (values.empty()) return block;

    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    const std::uint32_t levels = (1u << qbits) - 1u;
    block.offset = lo;
    block.step = hi > lo ? (hi - lo) / static_cast<double>(levels) : 0.0;
    if (!std::isfinite(block.step)) throw InvalidInputError("quantize: range overflow");

    block.symbols.reserve(values.size());
    for (double v : values) {
        std::uint32_t sym = 0;
        if (block.step > 0.0) {
            const double scaled = (v - lo) / block.step;
            sym = static_cast<std::uint32_t>(std::lround(scaled));
            sym = std::min(sym, levels);
        }
        block.symbols.push_back(sym);
    }
    return block;
}

std::vector<double> dequantize(const QuantizedBlock& block) {
    std::vector<double> values;
    values.reserve(block.symbols.size());
    for (std::uint32_t sym : block.symbols) {
        values.push_back(block.offset + static_cast<double>(sym) * block.step);
    }
    return values;
}

CodedSection entropy_encode(const std::vector<std::uint32_t>& symbols, int qbits) {
    if (qbits < 1 || qbits > 16) throw InvalidInputError("qbits must be in [1, 16]");
    const std::uint64_t limit = 1ull << qbits;
    for (std::uint32_t s : symbols) {
        if (s >= limit) throw InvalidInputError("symbol out of range for qbits");
    }
    if (symbols.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw InvalidInputError("symbol count overflows section header");
    }

    CodedSection section;
    section.qbits = qbits;
    section.count = static_cast<std::uint32_t>(symbols.size());
    if (symbols.empty()) return section; // empty Huffman section, 0 payload bits

    std::uint32_t max_sym = 0;
    std::vector<std::uint64_t> freq(limit, 0);
    for (std::uint32_t s : symbols) {
        ++freq[s];
        max_sym = std::max(max_sym, s);
    }
    std::vector<std::uint8_t> lengths = detail::huffman_code_lengths(freq);
    lengths.resize(max_sym + 1);

    const std::size_t distinct = distinct_count(lengths);
    std::uint64_t huff_payload_bits = 0;
    if (distinct > 1) {
        for (std::uint32_t sym = 0; sym <= max_sym; ++sym) {
            huff_payload_bits += freq[sym] * lengths[sym];
        }
    }
    const std::uint64_t huff_cost = 8ull * lengths.size() + huff_payload_bits;
    const std::uint64_t raw_cost = static_cast<std::uint64_t>(qbits) * symbols.size();

    if (huff_cost >= raw_cost) {
        section.mode = kModeRaw;
        section.payload_bits = static_cast<std::uint32_t>(
            std::min<std::uint64_t>(raw_cost, std::numeric_limits<std::uint32_t>::max()));
        if (raw_cost > std::numeric_limits<std::uint32_t>::max()) {
            throw InvalidInputError("payload overflows section header");
        }
        BitWriter writer;
        for (std::uint32_t s : symbols) writer.put_bits(s, qbits);
        section.payload = writer.finish();
        return section;
    }

    if (huff_payload_bits > std::numeric_limits<std::uint32_t>::max()) {
        throw InvalidInputError("payload overflows section header");
    }
    section.mode = kModeHuffman;
    section.code_lengths = lengths;
    section.payload_bits = static_cast<std::uint32_t>(huff_payload_bits);
    if (distinct > 1) {
        const CanonicalCodes canon = canonicalize(lengths);
        const std::vector<std::uint64_t> codes = assign_codes(lengths, canon);
        BitWriter writer;
        for (std::uint32_t s : symbols) writer.put_bits(codes[s], lengths[s]);
        section.payload = writer.finish();
    }
    return section;
}

std::vector<std::uint32_t> entropy_decode(const CodedSection& section) {
    std::vector<std::uint32_t> symbols;
    symbols.reserve(section.count);
    if (section.count == 0) return symbols;

    if (section.mode == kModeRaw) {
        const std::uint64_t expected = static_cast<std::uint64_t>(section.qbits) * section.count;
        if (section.payload_bits != expected ||
            section.payload.size() * 8ull < section.payload_bits) {
            throw DecodeError("raw section size mismatch", 0);
        }
        BitReader reader(section.payload, 0);
        for (std::uint32_t i = 0; i < section.count; ++i) {
            symbols.push_back(static_cast<std::uint32_t>(reader.get_bits(section.qbits)));
        }
        return symbols;
    }
    if (section.mode != kModeHuffman) throw DecodeError("unknown section mode", 0);

    const std::vector<std::uint8_t>& lengths = section.code_lengths;
    if (lengths.empty()) throw DecodeError("missing code table", 0);
    if (lengths.size() > (1ull << section.qbits)) {
        throw DecodeError("code table wider than symbol alphabet", 0);
    }
    const CanonicalCodes canon = canonicalize(lengths);
    if (!kraft_ok(canon)) throw DecodeError("corrupt code table", 0);

    const std::size_t distinct = canon.symbols.size();
    if (distinct == 0) throw DecodeError("empty code table", 0);
    if (distinct == 1) {
        symbols.assign(section.count, canon.symbols[0]);
        return symbols;
    }

    BitReader reader(section.payload, 0);
    for (std::uint32_t i = 0; i < section.count; ++i) {
        std::uint64_t code = 0;
        int len = 0;
        std::uint32_t sym = 0;
        bool found = false;
        while (!found) {
            code = (code << 1) | static_cast<std::uint64_t>(reader.get_bit());
            ++len;
            if (len > canon.max_len) throw DecodeError("invalid code word", 0);
            if (canon.count_by_len[len] == 0) continue;
            const std::uint64_t offset = code - canon.first_code[len];
            if (code >= canon.first_code[len] && offset < canon.count_by_len[len]) {
                sym = canon.symbols[canon.first_index[len] + offset];
                found = true;
            }
        }
        symbols.push_back(sym);
    }
    return symbols;
}

namespace {

void write_section(std::vector<std::uint8_t>& out, double offset, double step,
                   const CodedSection& section) {
    put_f64(out, offset);
    put_f64(out, step);
    put_u32(out, section.count);
    put_u8(out, section.mode);
    if (section.mode == kModeHuffman) {
        if (section.code_lengths.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw InvalidInputError("code table overflows section header");
        }
        put_u16(out, static_cast<std::uint16_t>(section.code_lengths.size()));
        out.insert(out.end(), section.code_lengths.begin(), section.code_lengths.end());
    } else {
        put_u16(out, 0);
    }
    put_u32(out, section.payload_bits);
    out.insert(out.end(), section.payload.begin(), section.payload.end());
}

struct SectionData {
    double offset = 0.0;
    double step = 0.0;
    CodedSection coded;
};

SectionData read_section(ByteReader& reader, int qbits) {
    SectionData s;
    s.offset = reader.f64();
    s.step = reader.f64();
    s.coded.qbits = qbits;
    s.coded.count = reader.u32();
    s.coded.mode = reader.u8();
    const std::uint16_t table_len = reader.u16();
    if (s.coded.mode == kModeHuffman && table_len > 0) {
        s.coded.code_lengths = reader.raw(table_len);
    } else if (s.coded.mode == kModeRaw && table_len != 0) {
        throw DecodeError("raw section carries a code table", reader.pos());
    }
    s.coded.payload_bits = reader.u32();
    s.coded.payload = reader.raw((s.coded.payload_bits + 7) / 8);
    return s;
}

std::vector<double> decode_section_values(const SectionData& s) {
    QuantizedBlock block;
    block.offset = s.offset;
    block.step = s.step;
    block.qbits = s.coded.qbits;
    block.symbols = entropy_decode(s.coded);
    return dequantize(block);
}

} // namespace

BitStream pack_stream(const svid::SvidFactors& factors, int qbits) {
    if (qbits < 1 || qbits > 16) throw InvalidInputError("qbits must be in [1, 16]");
    const std::size_t m = factors.sign.rows();
    const std::size_t n = factors.sign.cols();
    const std::size_t r = factors.low_rank.rank();
    if (m == 0 || n == 0 || r == 0) throw InvalidInputError("pack_stream: empty factors");
    if (factors.low_rank.u.rows() != m || factors.low_rank.u.cols() != r ||
        factors.low_rank.v.rows() != n || factors.low_rank.v.cols() != r) {
        throw InvalidInputError("pack_stream: factor dimension mismatch");
    }
    if (m > std::numeric_limits<std::uint32_t>::max() ||
        n > std::numeric_limits<std::uint32_t>::max() ||
        r > std::numeric_limits<std::uint16_t>::max()) {
        throw InvalidInputError("pack_stream: dimensions overflow header fields");
    }

    const QuantizedBlock qu = quantize(factors.low_rank.u.data(), qbits);
    const QuantizedBlock qs = quantize(factors.low_rank.singular_values, qbits);
    const QuantizedBlock qv = quantize(factors.low_rank.v.data(), qbits);
    const CodedSection su = entropy_encode(qu.symbols, qbits);
    const CodedSection ss = entropy_encode(qs.symbols, qbits);
    const CodedSection sv = entropy_encode(qv.symbols, qbits);

    BitStream stream;
    std::vector<std::uint8_t>& out = stream.bytes;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u8(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(m));
    put_u32(out, static_cast<std::uint32_t>(n));
    put_u16(out, static_cast<std::uint16_t>(r));
    put_u8(out, static_cast<std::uint8_t>(qbits));
    std::uint8_t flags = 0;
    if (su.mode == kModeRaw) flags |= 1u;
    if (ss.mode == kModeRaw) flags |= 2u;
    if (sv.mode == kModeRaw) flags |= 4u;
    put_u8(out, flags);

    BitWriter bitmap;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            bitmap.put_bit(factors.sign(i, j) > 0 ? 1 : 0);
        }
    }
    const std::vector<std::uint8_t> bitmap_bytes = bitmap.finish();
    out.insert(out.end(), bitmap_bytes.begin(), bitmap_bytes.end());

    write_section(out, qu.offset, qu.step, su);
    write_section(out, qs.offset, qs.step, ss);
    write_section(out, qv.offset, qv.step, sv);
    return stream;
}

StreamHeader read_header(const BitStream& stream) {
    ByteReader reader(stream.bytes);
    const std::vector<std::uint8_t> magic = reader.raw(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw FormatError("bad magic; not a representation stream");
    }
    const std::uint8_t version = reader.u8();
    if (version != kVersion) {
        throw FormatError("unsupported stream version " + std::to_string(version));
    }
    StreamHeader h;
    h.m = reader.u32();
    h.n = reader.u32();
    h.r = reader.u16();
    h.q = reader.u8();
    h.flags = reader.u8();
    return h;
}

svid::SvidFactors unpack_stream(const BitStream& stream) {
    const StreamHeader h = read_header(stream);
    if (h.m == 0 || h.n == 0 || h.r == 0 || h.q < 1 || h.q > 16) {
        throw DecodeError("invalid header fields", 0);
    }
    ByteReader reader(stream.bytes);
    reader.raw(17); // past the fixed header

    const std::uint64_t mn = static_cast<std::uint64_t>(h.m) * h.n;
    const std::vector<std::uint8_t> bitmap = reader.raw((mn + 7) / 8);
    SignMatrix sign(h.m, h.n);
    for (std::uint64_t idx = 0; idx < mn; ++idx) {
        const int bit = (bitmap[idx >> 3] >> (7 - (idx & 7))) & 1;
        sign.data()[idx] = bit ? +1 : -1;
    }

    const SectionData du = read_section(reader, h.q);
    const SectionData ds = read_section(reader, h.q);
    const SectionData dv = read_section(reader, h.q);
    if (reader.remaining() != 0) {
        throw DecodeError("trailing bytes after final section", reader.pos());
    }

    const std::vector<double> uvals = decode_section_values(du);
    std::vector<double> svals = decode_section_values(ds);
    const std::vector<double> vvals = decode_section_values(dv);
    if (uvals.size() != static_cast<std::uint64_t>(h.m) * h.r ||
        svals.size() != h.r || vvals.size() != static_cast<std::uint64_t>(h.n) * h.r) {
        throw DecodeError("section counts disagree with header dimensions", 0);
    }

    svid::SvidFactors factors;
    factors.sign = std::move(sign);
    factors.low_rank.u = Matrix(h.m, h.r);
    factors.low_rank.u.data() = uvals;
    factors.low_rank.singular_values = std::move(svals);
    factors.low_rank.v = Matrix(h.n, h.r);
    factors.low_rank.v.data() = vvals;
    return factors;
}

} // namespace ridas::codec
