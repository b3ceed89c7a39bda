#pragma once

#include "hchain/encoding.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

typedef struct evp_pkey_st EVP_PKEY;
typedef struct evp_cipher_ctx_st EVP_CIPHER_CTX;

namespace hchain::crypto {

inline constexpr std::size_t kKeySize = 32;
inline constexpr std::size_t kNonceSize = 12;
inline constexpr std::size_t kTagSize = 16;
inline constexpr std::size_t kDigestSize = 32;

/// ChaCha20 keystream generator. Seeded instances are reproducible; every
/// nonce, key and adversary decision in a run is drawn from one of these.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    static Rng from_entropy();

    Rng(Rng&&) noexcept;
    Rng& operator=(Rng&&) noexcept;
    ~Rng();

    void fill(std::span<std::uint8_t> out);
    Bytes bytes(std::size_t n);
    std::uint64_t next_u64();
    /// Uniform in [0, bound). bound must be > 0.
    std::uint64_t uniform(std::uint64_t bound);
    /// Uniform in [0, 1).
    double unit();

    /// Independent stream keyed by this generator's key and a label. Does not
    /// advance this generator.
    Rng derive(std::string_view label) const;

private:
    explicit Rng(const std::array<std::uint8_t, 32>& key);
    void refill();

    std::array<std::uint8_t, 32> key_{};
    std::unique_ptr<EVP_CIPHER_CTX, void (*)(EVP_CIPHER_CTX*)> ctx_;
    std::array<std::uint8_t, 64> block_{};
    std::size_t used_ = 64;
};

class Digest {
public:
    Digest() = default;
    explicit Digest(const std::array<std::uint8_t, kDigestSize>& b) : bytes_(b) {}
    /// Throws DecodeError unless the text is 64 lowercase hex characters.
    static Digest from_hex(std::string_view hex);
    static Digest from_bytes(ByteView b);

    const std::array<std::uint8_t, kDigestSize>& bytes() const { return bytes_; }
    ByteView view() const { return bytes_; }
    std::string hex() const;

    friend bool operator==(const Digest&, const Digest&) = default;
    friend auto operator<=>(const Digest&, const Digest&) = default;

private:
    std::array<std::uint8_t, kDigestSize> bytes_{};
};

struct SecretKey {
    std::array<std::uint8_t, kKeySize> bytes{};

    static SecretKey generate(Rng& rng);
    static SecretKey from_hex(std::string_view hex);
    std::string hex() const;

    friend bool operator==(const SecretKey&, const SecretKey&) = default;
};

/// AEAD output: 12-byte nonce and ciphertext with the 16-byte tag appended.
struct Ciphertext {
    std::array<std::uint8_t, kNonceSize> nonce{};
    Bytes body;

    /// nonce || body, the byte string that per-reading digests cover.
    Bytes concat() const;

    friend bool operator==(const Ciphertext&, const Ciphertext&) = default;
};

/// Deterministic (SIV-style) encryption of an identity string.
struct IdentityToken {
    Bytes bytes;

    friend bool operator==(const IdentityToken&, const IdentityToken&) = default;
    friend auto operator<=>(const IdentityToken&, const IdentityToken&) = default;
};

struct Signature {
    Bytes bytes;

    friend bool operator==(const Signature&, const Signature&) = default;
};

/// Ed25519 public key, raw 32 bytes.
class PublicKey {
public:
    PublicKey() = default;
    explicit PublicKey(const std::array<std::uint8_t, 32>& raw) : raw_(raw) {}
    static PublicKey from_hex(std::string_view hex);

    const std::array<std::uint8_t, 32>& raw() const { return raw_; }
    std::string hex() const;
    /// Hex of the first 8 bytes of SHA-256(raw).
    std::string key_id() const;

    friend bool operator==(const PublicKey&, const PublicKey&) = default;

private:
    std::array<std::uint8_t, 32> raw_{};
};

/// Ed25519 signing key pair.
class SignatureKeyPair {
public:
    static SignatureKeyPair generate(Rng& rng);

    const PublicKey& public_key() const { return public_; }
    std::string key_id() const { return public_.key_id(); }

private:
    friend Signature sign(const SignatureKeyPair&, ByteView);
    SignatureKeyPair() = default;

    std::shared_ptr<EVP_PKEY> pkey_;
    PublicKey public_;
};

Digest hash_bytes(ByteView data);
inline Digest hash_bytes(std::string_view data) { return hash_bytes(as_bytes(data)); }

/// HMAC-SHA256.
Digest hmac(ByteView key, ByteView data);

/// AES-256-GCM with a fresh nonce from rng. aad is authenticated, not encrypted.
Ciphertext symmetric_encrypt(const SecretKey& key, ByteView plaintext, Rng& rng, ByteView aad = {});

/// Throws AuthenticationFailure when the tag does not verify.
Bytes symmetric_decrypt(const SecretKey& key, const Ciphertext& ct, ByteView aad = {});

/// Synthetic nonce = HMAC of the identity under a MAC subkey; the identity is
/// then sealed with AES-256-GCM under an encryption subkey. Token layout is
/// nonce || ciphertext || tag. Throws EmptyIdentity.
IdentityToken deterministic_encrypt_identity(const SecretKey& key, std::string_view identity);

/// Inverse of deterministic_encrypt_identity; also re-checks the synthetic
/// nonce. Throws AuthenticationFailure.
std::string deterministic_decrypt_identity(const SecretKey& key, const IdentityToken& token);

Signature sign(const SignatureKeyPair& kp, ByteView data);
bool verify(const PublicKey& pub, ByteView data, const Signature& sig);

/// RSA key pair used only for the chunked asymmetric encryption benchmark.
class RsaKeyPair {
public:
    static RsaKeyPair generate(int bits = 2048);

    /// Largest plaintext chunk for RSA-OAEP(SHA-256): modulus - 66 bytes.
    std::size_t chunk_payload() const;
    int modulus_bytes() const;

private:
    friend std::vector<Bytes> asymmetric_encrypt_chunked(const RsaKeyPair&, ByteView);
    friend Bytes asymmetric_decrypt_chunked(const RsaKeyPair&, const std::vector<Bytes>&);
    RsaKeyPair() = default;

    std::shared_ptr<EVP_PKEY> pkey_;
};

inline constexpr std::size_t kOaepOverhead = 2 * kDigestSize + 2;

std::vector<Bytes> asymmetric_encrypt_chunked(const RsaKeyPair& kp, ByteView data);
Bytes asymmetric_decrypt_chunked(const RsaKeyPair& kp, const std::vector<Bytes>& chunks);

} // namespace hchain::crypto
