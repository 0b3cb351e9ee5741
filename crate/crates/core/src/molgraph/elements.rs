//! Element table and the fixed atom/bond encodings.

/// `(symbol, atomic number, standard atomic mass)`.
const ELEMENTS: &[(&str, u8, f64)] = &[
    ("H", 1, 1.008),
    ("Li", 3, 6.94),
    ("B", 5, 10.81),
    ("C", 6, 12.011),
    ("N", 7, 14.007),
    ("O", 8, 15.999),
    ("F", 9, 18.998),
    ("Na", 11, 22.990),
    ("Mg", 12, 24.305),
    ("Al", 13, 26.982),
    ("Si", 14, 28.085),
    ("P", 15, 30.974),
    ("S", 16, 32.06),
    ("Cl", 17, 35.45),
    ("K", 19, 39.098),
    ("Ca", 20, 40.078),
    ("Ti", 22, 47.867),
    ("V", 23, 50.942),
    ("Cr", 24, 51.996),
    ("Mn", 25, 54.938),
    ("Fe", 26, 55.845),
    ("Co", 27, 58.933),
    ("Ni", 28, 58.693),
    ("Cu", 29, 63.546),
    ("Zn", 30, 65.38),
    ("Ge", 32, 72.630),
    ("As", 33, 74.922),
    ("Se", 34, 78.971),
    ("Br", 35, 79.904),
    ("Rb", 37, 85.468),
    ("Sr", 38, 87.62),
    ("Ag", 47, 107.868),
    ("Sn", 50, 118.710),
    ("Sb", 51, 121.760),
    ("Te", 52, 127.60),
    ("I", 53, 126.904),
    ("Cs", 55, 132.905),
    ("Ba", 56, 137.327),
    ("Gd", 64, 157.25),
    ("Pt", 78, 195.084),
    ("Au", 79, 196.967),
    ("Hg", 80, 200.592),
    ("Bi", 83, 208.980),
];

pub fn atomic_number(symbol: &str) -> Option<u8> {
    ELEMENTS.iter().find(|(s, _, _)| *s == symbol).map(|&(_, z, _)| z)
}

pub fn symbol(z: u8) -> Option<&'static str> {
    ELEMENTS.iter().find(|(_, n, _)| *n == z).map(|&(s, _, _)| s)
}

pub fn atomic_mass(z: u8) -> Option<f64> {
    ELEMENTS.iter().find(|(_, n, _)| *n == z).map(|&(_, _, m)| m)
}

/// One-hot element alphabet; anything else falls into a trailing "other" slot.
pub const ELEMENT_ALPHABET: [u8; 11] = [1, 5, 6, 7, 8, 15, 16, 9, 17, 35, 53];
pub const MAX_DEGREE: usize = 5;
pub const CHARGE_RANGE: (i8, i8) = (-2, 2);

/// Width of an encoded atom: element (11 + other), degree 0–5, charge −2..+2,
/// aromatic bit, scaled mass.
pub const ATOM_WIDTH: usize = ELEMENT_ALPHABET.len() + 1 + (MAX_DEGREE + 1) + 5 + 1 + 1;
/// Width of an encoded bond: order one-hot (4) and ring bit.
pub const BOND_WIDTH: usize = 4 + 1;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths() {
        assert_eq!(ATOM_WIDTH, 25);
        assert_eq!(BOND_WIDTH, 5);
    }

    #[test]
    fn alphabet_entries_exist() {
        for z in ELEMENT_ALPHABET {
            assert!(symbol(z).is_some());
        }
        assert_eq!(atomic_number("Cl"), Some(17));
        assert_eq!(atomic_number("Xx"), None);
    }
}
