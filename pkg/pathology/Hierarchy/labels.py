"""Label spaces of the single-stage and two-stage classifiers."""

from django.db import models

from pathology.exceptions import ExperimentError


class Gender(models.TextChoices):
    MALE = 'M', 'Male'
    FEMALE = 'F', 'Female'


class FinalLabel(models.TextChoices):
    HC = 'HC', 'Healthy control'
    D1 = 'D1', 'COVID-19'
    D2 = 'D2', "Parkinson's"
    D3 = 'D3', 'Dysphonia'
    D4 = 'D4', 'Vocal cord paresis'
    D5 = 'D5', 'Laryngitis'
    D6 = 'D6', 'ALS'


class GenderHealthLabel(models.TextChoices):
    HC_M = 'HC_M', 'Male healthy control'
    HC_F = 'HC_F', 'Female healthy control'
    P_M = 'P_M', 'Male pathology'
    P_F = 'P_F', 'Female pathology'


FINAL_LABELS = list(FinalLabel)
DISEASES = [label for label in FinalLabel if label != FinalLabel.HC]
STAGE1_LABELS = list(GenderHealthLabel)
HEALTHY_ROUTES = (GenderHealthLabel.HC_M, GenderHealthLabel.HC_F)


def parse_gender(value):
    try:
        return Gender(str(value).strip().upper())
    except ValueError:
        raise ExperimentError(f"missing or unknown gender {value!r}") from None


def parse_label(value):
    try:
        return FinalLabel(str(value).strip().upper())
    except ValueError:
        raise ExperimentError(f"unknown label {value!r}") from None


def stage1_label(gender, label):
    """Map (gender, final label) to the first-stage gender-health class."""
    if gender in (None, ''):
        raise ExperimentError("missing gender")
    gender = parse_gender(gender)
    label = parse_label(label)
    if label == FinalLabel.HC:
        return GenderHealthLabel.HC_M if gender == Gender.MALE else GenderHealthLabel.HC_F
    return GenderHealthLabel.P_M if gender == Gender.MALE else GenderHealthLabel.P_F


def disease_index(label):
    """Index of a disease inside the six-class stage-2 space."""
    label = parse_label(label)
    if label == FinalLabel.HC:
        raise ExperimentError("healthy controls have no stage-2 class")
    return DISEASES.index(label)


def final_index(label):
    return FINAL_LABELS.index(parse_label(label))


def stage1_index(gender, label):
    return STAGE1_LABELS.index(stage1_label(gender, label))


def stage2_names(gender):
    """Gender-qualified stage-2 class names, e.g. D1M..D6M."""
    gender = parse_gender(gender)
    return [f"{disease.value}{gender.value}" for disease in DISEASES]
