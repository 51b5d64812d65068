import numpy as np
import pytest

from clockhist import PauliExpression, PauliParseError, parse_pauli

from helpers import SX, SZ


class TestParsing:
    def test_single_weighted_term(self):
        expr = parse_pauli("0.5*X0", n_qubits=1)
        assert np.array_equal(expr.to_matrix(1), 0.5 * SX)

    def test_merge_duplicate_words(self):
        expr = parse_pauli("Z0 + Z0")
        assert expr.to_string() == "2*Z0"

    def test_cancellation_to_zero(self):
        expr = parse_pauli("Z0 + -1*Z0")
        assert expr.terms == ()
        assert np.array_equal(expr.to_matrix(1), np.zeros((2, 2)))

    def test_two_site_word_matches_kron(self):
        expr = parse_pauli("0.5*X0X1", n_qubits=2)
        assert np.max(np.abs(expr.to_matrix(2) - 0.5 * np.kron(SX, SX))) == 0.0

    def test_site_order_is_normalized(self):
        assert parse_pauli("Z1X0").to_string() == parse_pauli("X0Z1").to_string()

    def test_identity_word(self):
        expr = parse_pauli("2.5*I")
        assert np.array_equal(expr.to_matrix(2), 2.5 * np.eye(4))

    def test_identity_letters_dropped(self):
        assert parse_pauli("X0I1").to_string() == parse_pauli("X0").to_string()

    def test_whitespace_insensitive(self):
        a = parse_pauli(" 0.5 * X0  +  0.25*Z0 Z1 ")
        b = parse_pauli("0.5*X0+0.25*Z0Z1")
        assert a == b

    def test_scientific_notation_coefficients(self):
        expr = parse_pauli("1e-2*Z0 + -2.5E1*X1")
        coeffs = {w: c for c, w in expr.terms}
        assert coeffs[((0, "Z"),)] == 0.01
        assert coeffs[((1, "X"),)] == -25.0

    def test_leading_site_index_multidigit(self):
        expr = parse_pauli("Y12")
        assert expr.n_sites == 13


class TestErrors:
    def test_empty(self):
        with pytest.raises(PauliParseError):
            parse_pauli("   ")

    def test_syntax_error_carries_offset(self):
        with pytest.raises(PauliParseError) as err:
            parse_pauli("0.5*X0 + @Z1")
        assert err.value.offset == 7  # whitespace is stripped before offsets

    def test_missing_star(self):
        with pytest.raises(PauliParseError, match="expected '\\*'"):
            parse_pauli("0.5 X0")

    def test_bare_letter_without_site(self):
        with pytest.raises(PauliParseError):
            parse_pauli("X")

    def test_out_of_range_site(self):
        with pytest.raises(PauliParseError, match="exceeds qubit count"):
            parse_pauli("X0Z3", n_qubits=2)
        with pytest.raises(ValueError, match="declared"):
            parse_pauli("X0Z3").to_matrix(2)

    def test_repeated_site_in_word(self):
        with pytest.raises(PauliParseError, match="repeated"):
            parse_pauli("X0Z0")

    def test_trailing_garbage(self):
        with pytest.raises(PauliParseError, match="expected '\\+'"):
            parse_pauli("Z0 Z1 Z2 -")


class TestRoundTrip:
    def _random_expression(self, rng) -> PauliExpression:
        n_terms = int(rng.integers(1, 7))
        terms = {}
        for _ in range(n_terms):
            n_sites = int(rng.integers(0, 4))
            sites = rng.choice(3, size=n_sites, replace=False)
            word = tuple(
                sorted((int(s), str(rng.choice(["X", "Y", "Z"]))) for s in sites)
            )
            coeff = float(np.round(rng.uniform(-3, 3), 6))
            if coeff == 0.0:
                coeff = 1.0
            terms[word] = coeff
        return PauliExpression(tuple(sorted((c, w) for w, c in terms.items())))

    def test_parse_print_round_trip(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            # build in canonical form directly, then round-trip through text
            expr = self._random_expression(rng)
            canonical = parse_pauli(expr.to_string())
            again = parse_pauli(canonical.to_string())
            assert again == canonical
            assert np.max(np.abs(again.to_matrix(3) - expr.to_matrix(3))) <= 1e-12

    def test_matrix_hermitian(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            m = self._random_expression(rng).to_matrix(3)
            assert np.max(np.abs(m - m.conj().T)) <= 1e-12


class TestOperatorBridge:
    def test_to_operator_label(self):
        op = parse_pauli("Z0Z1", n_qubits=2).to_operator(2)
        assert op.factor_names() == ("Q",)
        assert op.dim == 4
        assert np.array_equal(op.matrix, np.kron(SZ, SZ))
