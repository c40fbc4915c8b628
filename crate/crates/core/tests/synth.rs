use frame_core::features::ManipType;
use frame_core::synth::{
    build_corpus, corpus_item, make_authentic, make_copy_move, make_splice, Corpus, Label, Rect, Split,
};
use frame_core::Error;

#[test]
fn items_satisfy_mask_invariants() {
    for i in 0..24 {
        let item = corpus_item(3, i, 16).unwrap();
        assert_eq!(item.mask.dims(), (item.width as usize, item.height as usize));
        let img = item.image().unwrap();
        assert_eq!((img.width(), img.height()), (item.width, item.height));
        match item.label {
            Label::Tampered => {
                assert!(item.mask.count() >= 64);
                assert_ne!(item.manip_type, ManipType::Unknown);
            }
            Label::Authentic => assert!(item.mask.is_empty()),
        }
    }
}

#[test]
fn copy_move_duplicates_the_source() {
    let src = Rect::new(20, 24, 40, 36);
    let item = make_copy_move(8, src, (75, 50), 70, 92, (160, 128)).unwrap();
    let img = item.image().unwrap();
    let diff = |ox: usize, oy: usize| {
        let mut total = 0.0;
        for y in 0..36 {
            for x in 0..40 {
                let a = img.pixel(20 + x, 24 + y);
                let b = img.pixel(20 + x + ox, 24 + y + oy);
                total += (0..3).map(|c| (f64::from(a[c]) - f64::from(b[c])).abs()).sum::<f64>();
            }
        }
        total / (36.0 * 40.0 * 3.0)
    };
    assert!(diff(75, 50) < 4.0, "clone differs by {}", diff(75, 50));
    assert!(diff(75, 50) < diff(80, 40) / 2.0);
    assert_eq!(item.mask.count(), 40 * 36);
    assert!(item.mask.get(20 + 75, 24 + 50) && !item.mask.get(20, 24));
    assert!(matches!(make_copy_move(8, src, (0, 0), 70, 92, (160, 128)), Err(Error::RectOverlap)));
    assert!(matches!(make_copy_move(8, src, (130, 0), 70, 92, (160, 128)), Err(Error::RectOutOfBounds(_))));
}

#[test]
fn generators_are_deterministic() {
    let r = Rect::new(30, 30, 50, 40);
    assert_eq!(
        make_splice(1, 2, 90, 60, r, (128, 128)).unwrap().bytes,
        make_splice(1, 2, 90, 60, r, (128, 128)).unwrap().bytes
    );
    assert_eq!(make_authentic(5, Some(80), (128, 160)).unwrap().bytes, make_authentic(5, Some(80), (128, 160)).unwrap().bytes);
    assert!(make_splice(1, 2, 80, 80, r, (128, 128)).is_err());
    assert!(matches!(make_splice(1, 2, 90, 60, Rect::new(0, 0, 128, 128), (128, 128)), Err(Error::RectOutOfBounds(_))));
}

#[test]
fn corpus_layout_split_and_digest() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_corpus(200, 200, 0, dir.path()).unwrap();
    assert_eq!(m.items.len(), 400);
    assert_eq!(m.split(Split::Train).count(), 320);
    assert_eq!(m.split(Split::Val).count(), 80);
    let corpus = Corpus::open(dir.path()).unwrap();
    assert_eq!(corpus.manifest.digest(), m.digest());
    let e = &m.items[0];
    assert!(e.image.starts_with("images/0000."));
    assert_eq!(corpus.mask(e).unwrap().dims(), (e.width as usize, e.height as usize));
    let again = tempfile::tempdir().unwrap();
    assert_eq!(build_corpus(200, 200, 0, again.path()).unwrap().digest(), m.digest());
    assert!(build_corpus(0, 5, 0, again.path()).is_err());
}
