#include "aftrans/ppm.hpp"

#include <fstream>

#include "aftrans/tensor.hpp"

namespace aftrans {

namespace {

// Skips whitespace and '#' comments, then reads one unsigned decimal token.
bool next_header_value(std::istream& in, std::size_t& out) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) return false;
    std::size_t v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + static_cast<std::size_t>(c - '0');
        c = in.get();
    }
    if (c != EOF) in.unget();
    out = v;
    return true;
}

}  // namespace

PpmImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValueError("ppm: cannot open " + path);

    char magic[2];
    if (!in.read(magic, 2) || magic[0] != 'P' || magic[1] != '6')
        throw ValueError("ppm: " + path + ": not a binary P6 file");

    std::size_t w = 0, h = 0, maxval = 0;
    if (!next_header_value(in, w) || !next_header_value(in, h) ||
        !next_header_value(in, maxval))
        throw ValueError("ppm: " + path + ": malformed header");
    if (w == 0 || h == 0)
        throw ValueError("ppm: " + path + ": zero-extent image");
    if (maxval != 255)
        throw ValueError("ppm: " + path + ": only maxval 255 is supported");

    // Exactly one whitespace byte separates the header from the payload.
    const int sep = in.get();
    if (sep == EOF || !std::isspace(sep))
        throw ValueError("ppm: " + path + ": malformed header");

    PpmImage img;
    img.width = w;
    img.height = h;
    img.data.resize(w * h * 3);
    if (!in.read(reinterpret_cast<char*>(img.data.data()),
                 static_cast<std::streamsize>(img.data.size())))
        throw ValueError("ppm: " + path + ": truncated pixel data");
    return img;
}

void write_ppm(const std::string& path, const PpmImage& img) {
    if (img.data.size() != img.width * img.height * 3)
        throw ValueError("ppm: image buffer does not match extents");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValueError("ppm: cannot write " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    if (!out) throw ValueError("ppm: write failed for " + path);
}

}  // namespace aftrans
