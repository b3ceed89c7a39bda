#include "hchain/crypto.hpp"

#include "hchain/error.hpp"

#include <openssl/core_names.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/rsa.h>

#include <algorithm>
#include <cstring>

namespace hchain::crypto {

namespace {

using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, void (*)(EVP_CIPHER_CTX*)>;
using PkeyCtx = std::unique_ptr<EVP_PKEY_CTX, void (*)(EVP_PKEY_CTX*)>;
using MdCtx = std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)>;

CipherCtx new_cipher_ctx()
{
    CipherCtx ctx(EVP_CIPHER_CTX_new(), EVP_CIPHER_CTX_free);
    if (!ctx)
        throw Error("EVP_CIPHER_CTX_new failed");
    return ctx;
}

void check(int rc, const char* what)
{
    if (rc != 1)
        throw Error(std::string("openssl: ") + what);
}

std::array<std::uint8_t, 32> seed_key(std::uint64_t seed)
{
    std::array<std::uint8_t, 16 + 8> material{};
    std::memcpy(material.data(), "hchain-rng-seed:", 16);
    for (int i = 0; i < 8; ++i)
        material[16 + i] = static_cast<std::uint8_t>(seed >> (8 * i));
    return hash_bytes(material).bytes();
}

Bytes gcm_seal(ByteView key, ByteView nonce, ByteView plaintext, ByteView aad)
{
    auto ctx = new_cipher_ctx();
    check(EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr), "gcm init");
    check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()), nullptr),
          "gcm ivlen");
    check(EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()), "gcm key");
    int len = 0;
    if (!aad.empty())
        check(EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())), "gcm aad");
    Bytes out(plaintext.size() + kTagSize);
    int written = 0;
    if (!plaintext.empty()) {
        check(EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(), static_cast<int>(plaintext.size())),
              "gcm update");
        written = len;
    }
    check(EVP_EncryptFinal_ex(ctx.get(), out.data() + written, &len), "gcm final");
    written += len;
    check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagSize, out.data() + written), "gcm tag");
    out.resize(static_cast<std::size_t>(written) + kTagSize);
    return out;
}

Bytes gcm_open(ByteView key, ByteView nonce, ByteView body, ByteView aad)
{
    if (body.size() < kTagSize)
        throw AuthenticationFailure("ciphertext shorter than tag");
    auto ctx = new_cipher_ctx();
    check(EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr), "gcm init");
    check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()), nullptr),
          "gcm ivlen");
    check(EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()), "gcm key");
    int len = 0;
    if (!aad.empty())
        check(EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())), "gcm aad");
    const std::size_t n = body.size() - kTagSize;
    Bytes out(n);
    int written = 0;
    if (n > 0) {
        check(EVP_DecryptUpdate(ctx.get(), out.data(), &len, body.data(), static_cast<int>(n)), "gcm update");
        written = len;
    }
    Bytes tag(body.end() - kTagSize, body.end());
    check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagSize, tag.data()), "gcm set tag");
    if (EVP_DecryptFinal_ex(ctx.get(), out.data() + written, &len) != 1)
        throw AuthenticationFailure();
    return out;
}

struct SivKeys {
    Digest mac;
    Digest enc;
};

SivKeys siv_subkeys(const SecretKey& key)
{
    return {hmac(key.bytes, as_bytes("hchain-siv-mac")), hmac(key.bytes, as_bytes("hchain-siv-enc"))};
}

} // namespace

// ---------------------------------------------------------------------------
// Rng

Rng::Rng(const std::array<std::uint8_t, 32>& key)
    : key_(key), ctx_(EVP_CIPHER_CTX_new(), EVP_CIPHER_CTX_free)
{
    if (!ctx_)
        throw Error("EVP_CIPHER_CTX_new failed");
    std::array<std::uint8_t, 16> iv{};
    check(EVP_EncryptInit_ex(ctx_.get(), EVP_chacha20(), nullptr, key_.data(), iv.data()), "chacha20 init");
}

Rng::Rng(std::uint64_t seed) : Rng(seed_key(seed)) {}

Rng Rng::from_entropy()
{
    std::array<std::uint8_t, 32> key{};
    check(RAND_bytes(key.data(), static_cast<int>(key.size())), "RAND_bytes");
    return Rng(key);
}

Rng::Rng(Rng&&) noexcept = default;
Rng& Rng::operator=(Rng&&) noexcept = default;
Rng::~Rng() = default;

void Rng::refill()
{
    std::array<std::uint8_t, 64> zeros{};
    int len = 0;
    check(EVP_EncryptUpdate(ctx_.get(), block_.data(), &len, zeros.data(), static_cast<int>(zeros.size())),
          "chacha20 update");
    used_ = 0;
}

void Rng::fill(std::span<std::uint8_t> out)
{
    std::size_t pos = 0;
    while (pos < out.size()) {
        if (used_ == block_.size())
            refill();
        std::size_t n = std::min(out.size() - pos, block_.size() - used_);
        std::memcpy(out.data() + pos, block_.data() + used_, n);
        used_ += n;
        pos += n;
    }
}

Bytes Rng::bytes(std::size_t n)
{
    Bytes out(n);
    fill(out);
    return out;
}

std::uint64_t Rng::next_u64()
{
    std::array<std::uint8_t, 8> b{};
    fill(b);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t Rng::uniform(std::uint64_t bound)
{
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % bound;
}

double Rng::unit()
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

Rng Rng::derive(std::string_view label) const
{
    return Rng(hmac(key_, as_bytes(label)).bytes());
}

// ---------------------------------------------------------------------------
// Value types

Digest Digest::from_hex(std::string_view hex)
{
    return from_bytes(hex_decode(hex));
}

Digest Digest::from_bytes(ByteView b)
{
    if (b.size() != kDigestSize)
        throw DecodeError("digest length");
    std::array<std::uint8_t, kDigestSize> a{};
    std::copy(b.begin(), b.end(), a.begin());
    return Digest(a);
}

std::string Digest::hex() const
{
    return hex_encode(bytes_);
}

SecretKey SecretKey::generate(Rng& rng)
{
    SecretKey k;
    rng.fill(k.bytes);
    return k;
}

SecretKey SecretKey::from_hex(std::string_view hex)
{
    auto raw = hex_decode(hex);
    if (raw.size() != kKeySize)
        throw DecodeError("secret key must be 32 bytes");
    SecretKey k;
    std::copy(raw.begin(), raw.end(), k.bytes.begin());
    return k;
}

std::string SecretKey::hex() const
{
    return hex_encode(bytes);
}

Bytes Ciphertext::concat() const
{
    Bytes out(nonce.begin(), nonce.end());
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

PublicKey PublicKey::from_hex(std::string_view hex)
{
    auto raw = hex_decode(hex);
    if (raw.size() != 32)
        throw DecodeError("public key must be 32 bytes");
    std::array<std::uint8_t, 32> a{};
    std::copy(raw.begin(), raw.end(), a.begin());
    return PublicKey(a);
}

std::string PublicKey::hex() const
{
    return hex_encode(raw_);
}

std::string PublicKey::key_id() const
{
    auto d = hash_bytes(raw_);
    return hex_encode(ByteView(d.bytes()).first(8));
}

// ---------------------------------------------------------------------------
// Hashing

Digest hash_bytes(ByteView data)
{
    std::array<std::uint8_t, kDigestSize> out{};
    unsigned int len = 0;
    check(EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr), "sha256");
    return Digest(out);
}

Digest hmac(ByteView key, ByteView data)
{
    std::array<std::uint8_t, kDigestSize> out{};
    unsigned int len = 0;
    if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(), out.data(), &len))
        throw Error("openssl: hmac");
    return Digest(out);
}

// ---------------------------------------------------------------------------
// Symmetric

Ciphertext symmetric_encrypt(const SecretKey& key, ByteView plaintext, Rng& rng, ByteView aad)
{
    Ciphertext ct;
    rng.fill(ct.nonce);
    ct.body = gcm_seal(key.bytes, ct.nonce, plaintext, aad);
    return ct;
}

Bytes symmetric_decrypt(const SecretKey& key, const Ciphertext& ct, ByteView aad)
{
    return gcm_open(key.bytes, ct.nonce, ct.body, aad);
}

IdentityToken deterministic_encrypt_identity(const SecretKey& key, std::string_view identity)
{
    if (identity.empty())
        throw EmptyIdentity();
    auto sub = siv_subkeys(key);
    auto siv = hmac(sub.mac.view(), as_bytes(identity));
    ByteView nonce = siv.view().first(kNonceSize);
    auto body = gcm_seal(sub.enc.view(), nonce, as_bytes(identity), {});
    IdentityToken token;
    token.bytes.assign(nonce.begin(), nonce.end());
    token.bytes.insert(token.bytes.end(), body.begin(), body.end());
    return token;
}

std::string deterministic_decrypt_identity(const SecretKey& key, const IdentityToken& token)
{
    if (token.bytes.size() < kNonceSize + kTagSize)
        throw AuthenticationFailure("identity token too short");
    auto sub = siv_subkeys(key);
    ByteView all(token.bytes);
    auto plain = gcm_open(sub.enc.view(), all.first(kNonceSize), all.subspan(kNonceSize), {});
    auto siv = hmac(sub.mac.view(), plain);
    if (!std::equal(all.begin(), all.begin() + kNonceSize, siv.bytes().begin()))
        throw AuthenticationFailure("synthetic nonce mismatch");
    return to_string(plain);
}

// ---------------------------------------------------------------------------
// Signatures

SignatureKeyPair SignatureKeyPair::generate(Rng& rng)
{
    std::array<std::uint8_t, 32> seed{};
    rng.fill(seed);
    EVP_PKEY* raw = EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size());
    if (!raw)
        throw Error("openssl: ed25519 key");
    SignatureKeyPair kp;
    kp.pkey_.reset(raw, EVP_PKEY_free);
    std::array<std::uint8_t, 32> pub{};
    std::size_t len = pub.size();
    check(EVP_PKEY_get_raw_public_key(raw, pub.data(), &len), "ed25519 public key");
    kp.public_ = PublicKey(pub);
    return kp;
}

Signature sign(const SignatureKeyPair& kp, ByteView data)
{
    MdCtx md(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    check(EVP_DigestSignInit(md.get(), nullptr, nullptr, nullptr, kp.pkey_.get()), "sign init");
    Signature sig;
    sig.bytes.resize(64);
    std::size_t len = sig.bytes.size();
    check(EVP_DigestSign(md.get(), sig.bytes.data(), &len, data.data(), data.size()), "sign");
    sig.bytes.resize(len);
    return sig;
}

bool verify(const PublicKey& pub, ByteView data, const Signature& sig)
{
    std::unique_ptr<EVP_PKEY, void (*)(EVP_PKEY*)> pkey(
        EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, pub.raw().data(), pub.raw().size()),
        EVP_PKEY_free);
    if (!pkey)
        return false;
    MdCtx md(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (EVP_DigestVerifyInit(md.get(), nullptr, nullptr, nullptr, pkey.get()) != 1)
        return false;
    return EVP_DigestVerify(md.get(), sig.bytes.data(), sig.bytes.size(), data.data(), data.size()) == 1;
}

// ---------------------------------------------------------------------------
// RSA chunked encryption

RsaKeyPair RsaKeyPair::generate(int bits)
{
    EVP_PKEY* raw = EVP_RSA_gen(static_cast<unsigned int>(bits));
    if (!raw)
        throw Error("openssl: rsa keygen");
    RsaKeyPair kp;
    kp.pkey_.reset(raw, EVP_PKEY_free);
    return kp;
}

int RsaKeyPair::modulus_bytes() const
{
    return EVP_PKEY_get_size(pkey_.get());
}

std::size_t RsaKeyPair::chunk_payload() const
{
    return static_cast<std::size_t>(modulus_bytes()) - kOaepOverhead;
}

namespace {

PkeyCtx oaep_ctx(EVP_PKEY* pkey, bool encrypt)
{
    PkeyCtx ctx(EVP_PKEY_CTX_new(pkey, nullptr), EVP_PKEY_CTX_free);
    if (!ctx)
        throw Error("openssl: pkey ctx");
    check(encrypt ? EVP_PKEY_encrypt_init(ctx.get()) : EVP_PKEY_decrypt_init(ctx.get()), "rsa init");
    check(EVP_PKEY_CTX_set_rsa_padding(ctx.get(), RSA_PKCS1_OAEP_PADDING), "rsa padding");
    check(EVP_PKEY_CTX_set_rsa_oaep_md(ctx.get(), EVP_sha256()), "oaep md");
    check(EVP_PKEY_CTX_set_rsa_mgf1_md(ctx.get(), EVP_sha256()), "mgf1 md");
    return ctx;
}

} // namespace

std::vector<Bytes> asymmetric_encrypt_chunked(const RsaKeyPair& kp, ByteView data)
{
    std::vector<Bytes> chunks;
    if (data.empty())
        return chunks;
    auto ctx = oaep_ctx(kp.pkey_.get(), true);
    const std::size_t step = kp.chunk_payload();
    const auto out_len = static_cast<std::size_t>(kp.modulus_bytes());
    chunks.reserve((data.size() + step - 1) / step);
    for (std::size_t pos = 0; pos < data.size(); pos += step) {
        auto piece = data.subspan(pos, std::min(step, data.size() - pos));
        Bytes out(out_len);
        std::size_t len = out.size();
        check(EVP_PKEY_encrypt(ctx.get(), out.data(), &len, piece.data(), piece.size()), "rsa encrypt");
        out.resize(len);
        chunks.push_back(std::move(out));
    }
    return chunks;
}

Bytes asymmetric_decrypt_chunked(const RsaKeyPair& kp, const std::vector<Bytes>& chunks)
{
    Bytes out;
    if (chunks.empty())
        return out;
    auto ctx = oaep_ctx(kp.pkey_.get(), false);
    Bytes buf(static_cast<std::size_t>(kp.modulus_bytes()));
    for (const auto& c : chunks) {
        std::size_t len = buf.size();
        if (EVP_PKEY_decrypt(ctx.get(), buf.data(), &len, c.data(), c.size()) != 1)
            throw AuthenticationFailure("rsa-oaep decryption failed");
        out.insert(out.end(), buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(len));
    }
    return out;
}

} // namespace hchain::crypto
