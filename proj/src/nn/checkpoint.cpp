#include "ftriage/nn/checkpoint.hpp"

#include "ftriage/common/bytes.hpp"

#include <cstring>

namespace ftriage::nn {

namespace {

constexpr char kMagic[4] = {'F', 'T', 'R', 'G'};

template <typename Real>
void write_record(ByteWriter& w, const std::string& name, const BasicTensor<Real>& t) {
    w.text(name);
    w.pod(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.pod(static_cast<std::uint64_t>(d));
    w.raw(t.data(), t.numel() * sizeof(Real));
}

template <typename Real>
void read_record(ByteReader& r, const std::string& expected_name, BasicTensor<Real>& target) {
    const std::string name = r.text("record name");
    if (name != expected_name) {
        throw FormatError("checkpoint record '" + name + "' where '" + expected_name + "' was expected");
    }
    const auto rank = r.pod<std::uint32_t>("record rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.pod<std::uint64_t>("record shape"));
    if (shape != target.shape()) {
        throw FormatError("checkpoint record '" + name + "' has shape " + shape_str(shape) + ", architecture expects " +
                          shape_str(target.shape()));
    }
    BasicTensor<Real> loaded(shape);
    r.raw(loaded.data(), loaded.numel() * sizeof(Real), "values of '" + name + "'");
    if (!loaded.all_finite()) throw FormatError("checkpoint record '" + name + "' contains non-finite values");
    target = std::move(loaded);
}

} // namespace

template <typename Real>
std::string save_checkpoint(const BasicNetwork<Real>& network) {
    auto& mutable_net = const_cast<BasicNetwork<Real>&>(network);
    ByteWriter w;
    w.raw(kMagic, sizeof kMagic);
    w.pod(kCheckpointVersion);
    w.pod(static_cast<std::uint32_t>(sizeof(Real)));
    w.text(nlohmann::json(network.architecture()).dump());
    const auto params = mutable_net.params();
    const auto buffers = mutable_net.buffers();
    w.pod(static_cast<std::uint32_t>(params.size() + buffers.size()));
    for (const auto* p : params) {
        if (!p->value.all_finite()) throw NumericError("cannot checkpoint non-finite parameter '" + p->name + "'");
        write_record(w, p->name, p->value);
    }
    for (const auto& b : buffers) write_record(w, b.name, *b.tensor);
    return w.take();
}

template <typename Real>
BasicNetwork<Real> load_checkpoint(std::string_view bytes) {
    ByteReader r(bytes, "checkpoint");
    char magic[4];
    r.raw(magic, sizeof magic, "magic");
    if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("checkpoint magic is not FTRG");
    const auto version = r.pod<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    const auto scalar_bytes = r.pod<std::uint32_t>("scalar_bytes");
    if (scalar_bytes != sizeof(Real)) {
        throw FormatError("checkpoint scalar_bytes " + std::to_string(scalar_bytes) + " does not match requested " +
                          std::to_string(sizeof(Real)) + "-byte precision");
    }
    ArchitectureSpec arch;
    try {
        arch = nlohmann::json::parse(r.text("architecture")).get<ArchitectureSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint architecture descriptor invalid: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint architecture descriptor invalid: ") + e.what());
    }
    BasicNetwork<Real> network(std::move(arch), 0);
    const auto params = network.params();
    const auto buffers = network.buffers();
    const auto count = r.pod<std::uint32_t>("record_count");
    if (count != params.size() + buffers.size()) {
        throw FormatError("checkpoint has " + std::to_string(count) + " records, architecture needs " +
                          std::to_string(params.size() + buffers.size()));
    }
    for (auto* p : params) {
        read_record(r, p->name, p->value);
        p->grad = BasicTensor<Real>(p->value.shape());
    }
    for (auto& b : buffers) read_record(r, b.name, *b.tensor);
    if (!r.done()) throw FormatError("checkpoint has trailing bytes after the last record");
    return network;
}

template <typename Real>
void save_checkpoint_file(const BasicNetwork<Real>& network, const std::filesystem::path& path) {
    write_file_bytes(path, save_checkpoint(network));
}

template <typename Real>
BasicNetwork<Real> load_checkpoint_file(const std::filesystem::path& path) {
    return load_checkpoint<Real>(read_file_bytes(path));
}

template std::string save_checkpoint(const Network&);
template std::string save_checkpoint(const NetworkD&);
template Network load_checkpoint<float>(std::string_view);
template NetworkD load_checkpoint<double>(std::string_view);
template void save_checkpoint_file(const Network&, const std::filesystem::path&);
template void save_checkpoint_file(const NetworkD&, const std::filesystem::path&);
template Network load_checkpoint_file<float>(const std::filesystem::path&);
template NetworkD load_checkpoint_file<double>(const std::filesystem::path&);

} // namespace ftriage::nn
