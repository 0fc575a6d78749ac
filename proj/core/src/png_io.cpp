#include "tinytrack/png_io.hpp"

#include <array>
#include <fstream>
#include <stdexcept>

namespace tinytrack {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t n = 0; n < 256; ++n) {
    std::uint32_t c = n;
    for (int k = 0; k < 8; ++k) {
      c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    }
    table[n] = c;
  }
  return table;
}

std::uint32_t crc32(const std::uint8_t* data, size_t len, std::uint32_t crc = 0) {
  static const auto table = make_crc_table();
  crc ^= 0xffffffffu;
  for (size_t i = 0; i < len; ++i) {
    crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  }
  return crc ^ 0xffffffffu;
}

std::uint32_t adler32(const std::uint8_t* data, size_t len) {
  std::uint32_t a = 1, b = 0;
  for (size_t i = 0; i < len; ++i) {
    a = (a + data[i]) % 65521;
    b = (b + a) % 65521;
  }
  return (b << 16) | a;
}

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void write_chunk(std::ofstream& out, const char type[4],
                 const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> head;
  push_u32(head, static_cast<std::uint32_t>(payload.size()));
  out.write(reinterpret_cast<const char*>(head.data()), 4);
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  out.write(reinterpret_cast<const char*>(body.data()),
            static_cast<std::streamsize>(body.size()));
  std::vector<std::uint8_t> crc;
  push_u32(crc, crc32(body.data(), body.size()));
  out.write(reinterpret_cast<const char*>(crc.data()), 4);
}

}  // namespace

void write_png(const Canvas& canvas, const std::filesystem::path& path) {
  if (canvas.width <= 0 || canvas.height <= 0) {
    throw std::invalid_argument("write_png: empty canvas");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_png: cannot open " + path.string());

  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr;
  push_u32(ihdr, static_cast<std::uint32_t>(canvas.width));
  push_u32(ihdr, static_cast<std::uint32_t>(canvas.height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  write_chunk(out, "IHDR", ihdr);

  // Raw scanlines with filter byte 0.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<size_t>(canvas.height) * (1 + 3 * canvas.width));
  for (int y = 0; y < canvas.height; ++y) {
    raw.push_back(0);
    for (int x = 0; x < canvas.width; ++x) {
      const Rgb& c = canvas.px[static_cast<size_t>(y) * canvas.width + x];
      raw.push_back(c.r);
      raw.push_back(c.g);
      raw.push_back(c.b);
    }
  }

  // zlib wrapper around stored deflate blocks.
  std::vector<std::uint8_t> idat;
  idat.push_back(0x78);
  idat.push_back(0x01);
  size_t offset = 0;
  while (offset < raw.size()) {
    const size_t chunk = std::min<size_t>(65535, raw.size() - offset);
    const bool last = offset + chunk == raw.size();
    idat.push_back(last ? 1 : 0);
    idat.push_back(static_cast<std::uint8_t>(chunk & 0xff));
    idat.push_back(static_cast<std::uint8_t>(chunk >> 8));
    idat.push_back(static_cast<std::uint8_t>(~chunk & 0xff));
    idat.push_back(static_cast<std::uint8_t>((~chunk >> 8) & 0xff));
    idat.insert(idat.end(), raw.begin() + static_cast<long>(offset),
                raw.begin() + static_cast<long>(offset + chunk));
    offset += chunk;
  }
  push_u32(idat, adler32(raw.data(), raw.size()));
  write_chunk(out, "IDAT", idat);
  write_chunk(out, "IEND", {});
}

}  // namespace tinytrack
