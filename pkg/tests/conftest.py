"""Shared fixtures: a medical-records style model, a tiny university
model, and helpers for building object models by hand."""

import pytest

from rebacminer.model import (
    ACLPolicy,
    AtomicCondition,
    AtomicConstraint,
    ClassDecl,
    ClassModel,
    FieldDecl,
    Object,
    ObjectModel,
    Rule,
    policy_meaning,
)


@pytest.fixture(scope="session")
def emr_cm():
    return ClassModel([
        ClassDecl("Hospital"),
        ClassDecl("MedicalRecord"),
        ClassDecl("Patient", (
            FieldDecl("registrations", "MedicalRecord", "many"),
        )),
        ClassDecl("Physician", (
            FieldDecl("isTrainee", "Boolean"),
            FieldDecl("affiliation", "Hospital"),
            FieldDecl("consultations", "Consultation", "many"),
        )),
        ClassDecl("Consultation", (
            FieldDecl("physician", "Physician"),
            FieldDecl("patient", "Patient"),
            FieldDecl("records", "MedicalRecord", "many"),
        )),
    ])


@pytest.fixture(scope="session")
def emr_om(emr_cm):
    fs = frozenset
    objects = [
        Object("hosp1", "Hospital"),
        Object("hosp2", "Hospital"),
        Object("rec1", "MedicalRecord"),
        Object("rec2", "MedicalRecord"),
        Object("rec3", "MedicalRecord"),
        Object("pat1", "Patient", {"registrations": fs({"rec1", "rec2"})}),
        Object("pat2", "Patient", {"registrations": fs({"rec3"})}),
        Object("cons1", "Consultation",
               {"physician": "doc1", "patient": "pat1",
                "records": fs({"rec1"})}),
        Object("cons2", "Consultation",
               {"physician": "doc1", "patient": "pat2",
                "records": fs({"rec3"})}),
        Object("cons3", "Consultation",
               {"physician": "doc2", "patient": "pat1",
                "records": fs({"rec1", "rec2"})}),
        Object("doc1", "Physician",
               {"isTrainee": False, "affiliation": "hosp1",
                "consultations": fs({"cons1", "cons2"})}),
        Object("doc2", "Physician",
               {"isTrainee": True, "affiliation": "hosp1",
                "consultations": fs({"cons3"})}),
        Object("doc3", "Physician",
               {"isTrainee": False, "affiliation": "hosp2",
                "consultations": fs()}),
    ]
    return ObjectModel(emr_cm, objects)


@pytest.fixture(scope="session")
def emr_rule():
    """Non-trainee physicians may view their own consultations."""
    return Rule(
        "Physician",
        frozenset({AtomicCondition(("isTrainee",), "in", frozenset({False}))}),
        "Consultation",
        frozenset(),
        frozenset({AtomicConstraint((), "equal", ("physician",)),
                   AtomicConstraint(("consultations", "records"), "supseteq",
                                    ("records",))}),
        frozenset({"view"}),
    )


@pytest.fixture(scope="session")
def emr_acl(emr_cm, emr_om, emr_rule):
    au = policy_meaning(emr_om, [emr_rule])
    return ACLPolicy(emr_cm, emr_om, frozenset({"view"}), au)


@pytest.fixture(scope="session")
def uni_cm():
    return ClassModel([
        ClassDecl("Dept"),
        ClassDecl("Student", (FieldDecl("dept", "Dept"),)),
        ClassDecl("Course", (
            FieldDecl("dept", "Dept"),
            FieldDecl("topics", "String", "many"),
        )),
    ])


@pytest.fixture(scope="session")
def uni_om(uni_cm):
    fs = frozenset
    return ObjectModel(uni_cm, [
        Object("CompSci", "Dept"),
        Object("Math", "Dept"),
        Object("stu1", "Student", {"dept": "CompSci"}),
        Object("stu2", "Student", {"dept": "Math"}),
        Object("crs1", "Course", {"dept": "CompSci", "topics": fs({"ai", "pl"})}),
        Object("crs2", "Course", {"dept": "Math", "topics": fs({"algebra"})}),
    ])
