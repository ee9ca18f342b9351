use voacalc::models::build_lattice_sqrt2;
use voacalc::scalar::Cyc8;
use voacalc::transforms::*;

#[test]
fn lattice_involutions_exact() {
    let m = build_lattice_sqrt2::<Cyc8>(4).unwrap();
    let fam = Family::new(&m.voa, &[&m.wh]).unwrap();
    for a in [&m.y_hh, &m.y_h0, &m.wh.action] {
        let b = braid(&braid(a, 1, &fam).unwrap(), -1, &fam).unwrap();
        assert!(b.same_type(a) && a.equals(&b), "B-B+ {}", a.label);
        let b = braid(&braid(a, -1, &fam).unwrap(), 1, &fam).unwrap();
        assert!(a.equals(&b), "B+B- {}", a.label);
        let c = contragredient(&contragredient(a, 1, &fam).unwrap(), -1, &fam).unwrap();
        assert!(c.same_type(a) && a.equals(&c), "C-1C {} {}", a.label, a.dist(&c).unwrap());
        let s = adjoint(&adjoint(a, &fam).unwrap(), &fam).unwrap();
        assert!(s.same_type(a) && a.equals(&s), "** {} {}", a.label, a.dist(&s).unwrap());
        let k = conjugate(&conjugate(a, &fam).unwrap(), &fam).unwrap();
        assert!(k.same_type(a) && a.equals(&k), "conj2 {}", a.label);
    }
    for md in [&m.voa.module, &m.wh] {
        let cr = creation(md, &fam).unwrap();
        let an = annihilation(md, &fam).unwrap();
        let ad = adjoint(&cr, &fam).unwrap();
        assert!(ad.same_type(&an), "{} vs {}", ad.type_label(), an.type_label());
        assert!(ad.equals(&an), "adj(creation) {} {}", md.label, ad.dist(&an).unwrap());
        let r = twist_relations_check(md, &fam, 0.0).unwrap();
        assert!(r.passed(), "{:?}", r.failures());
    }
}
