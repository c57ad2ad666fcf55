use cassi_cli::scube::ScubeFile;
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f32> {
    any::<u32>()
        .prop_map(f32::from_bits)
        .prop_filter("finite", |v| v.is_finite())
}

fn scube() -> impl Strategy<Value = ScubeFile> {
    (1usize..4, 1usize..5, 1usize..6, any::<bool>()).prop_flat_map(|(bands, rows, cols, with_nm)| {
        (
            prop::collection::vec(finite_f32(), bands * rows * cols),
            prop::collection::vec(finite_f32(), bands),
        )
            .prop_map(move |(data, nm)| ScubeFile {
                bands,
                rows,
                cols,
                data,
                wavelengths: with_nm.then_some(nm),
            })
    })
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #[test]
    fn write_read_is_bit_identical(f in scube()) {
        let bytes = f.encode();
        let back = ScubeFile::decode(&bytes).unwrap();
        prop_assert_eq!((back.bands, back.rows, back.cols), (f.bands, f.rows, f.cols));
        prop_assert_eq!(bits(&back.data), bits(&f.data));
        prop_assert_eq!(back.wavelengths.as_deref().map(bits), f.wavelengths.as_deref().map(bits));
        prop_assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn truncation_is_rejected(f in scube(), cut in 1usize..16) {
        let bytes = f.encode();
        let keep = bytes.len().saturating_sub(cut);
        let body_end = 17 + 4 * f.data.len();
        // dropping the whole trailer leaves a valid bare cube
        if let Ok(bare) = ScubeFile::decode(&bytes[..keep]) {
            prop_assert!(keep == body_end && bare.wavelengths.is_none());
        }
    }
}
