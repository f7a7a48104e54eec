import io
from unittest import TestCase, main

import numpy as np

from lmm_deriv.data.Dataset import ModelSpec, load_dataset, load_sleepstudy
from lmm_deriv.exceptions import DataValidationError

SLEEPSTUDY_N = 180
SLEEPSTUDY_SUBJECTS = 18
CLINIC_SPEC = ModelSpec(response="y", fixed=("x",), random=tuple(), group="Clinic")
SMALL_SPEC = ModelSpec(response="y", fixed=("x",), random=tuple(), group="g")
SMALL_CSV = "y,x,g\n1.0,0,a\n2.5,1,a\n3.0,0,b\n4.5,1,b\n"


def _stream(text: str) -> io.StringIO:
    return io.StringIO(text)


class testLoadDataset(TestCase):
    def test_sleepstudy_fixture(self):
        dataset, spec = load_sleepstudy()
        self.assertEqual(SLEEPSTUDY_N, dataset.n)
        self.assertEqual(SLEEPSTUDY_SUBJECTS, dataset.n_groups)
        self.assertEqual(np.float64, dataset.frame["Reaction"].dtype)
        self.assertEqual(("Reaction", "Days", "Subject"), spec.used_columns)

    def test_row_order_is_preserved(self):
        dataset = load_dataset(_stream(SMALL_CSV), SMALL_SPEC)
        np.testing.assert_array_equal([1.0, 2.5, 3.0, 4.5], dataset.frame["y"].to_numpy())
        self.assertEqual(["a", "a", "b", "b"], list(dataset.group_labels))

    def test_header_only_is_an_empty_dataset(self):
        with self.assertRaises(DataValidationError) as context:
            load_dataset(_stream("y,x,g\n"), SMALL_SPEC)
        self.assertIn("empty dataset", str(context.exception))

    def test_blank_input_is_an_empty_dataset(self):
        with self.assertRaises(DataValidationError) as context:
            load_dataset(_stream(""), SMALL_SPEC)
        self.assertIn("empty dataset", str(context.exception))

    def test_missing_group_column_is_named(self):
        with self.assertRaises(DataValidationError) as context:
            load_dataset(_stream(SMALL_CSV), CLINIC_SPEC)
        self.assertIn("Clinic", str(context.exception))

    def test_non_numeric_cell_reports_row_and_column(self):
        with self.assertRaises(DataValidationError) as context:
            load_dataset(_stream("y,x,g\n1.0,0,a\n2.5,abc,a\n"), SMALL_SPEC)
        message = str(context.exception)
        self.assertIn("'x'", message)
        self.assertIn("row 2", message)

    def test_missing_values_are_rejected(self):
        with self.assertRaises(DataValidationError):
            load_dataset(_stream("y,x,g\n1.0,0,a\nNA,1,a\n"), SMALL_SPEC)
        with self.assertRaises(DataValidationError):
            load_dataset(_stream("y,x,g\n1.0,0,a\n2.0,1,\n"), SMALL_SPEC)

    def test_missing_file(self):
        with self.assertRaises(DataValidationError):
            load_dataset("/nonexistent/lmm/data.csv", SMALL_SPEC)

    def test_custom_delimiter(self):
        dataset = load_dataset(_stream(SMALL_CSV.replace(",", ";")), SMALL_SPEC, delimiter=";")
        self.assertEqual(4, dataset.n)

    def test_group_labels_are_exact_strings(self):
        dataset = load_dataset(_stream("y,x,g\n1.0,0,007\n2.0,1,7\n"), SMALL_SPEC)
        self.assertEqual(["007", "7"], list(dataset.group_labels))
        self.assertEqual(2, dataset.n_groups)

    def test_group_labels_are_not_stripped_or_treated_as_missing(self):
        dataset = load_dataset(_stream("y,x,g\n1.0,0, a\n2.0,1,a\n3.0,0,NA\n4.0,1,.\n"), SMALL_SPEC)
        self.assertEqual([" a", "a", "NA", "."], list(dataset.group_labels))
        self.assertEqual(4, dataset.n_groups)

    def test_spaces_around_numbers_and_headers_are_ignored(self):
        dataset = load_dataset(_stream("y, x, g\n 1.0, 0,a\n2.0 ,1 ,b\n"), SMALL_SPEC)
        np.testing.assert_array_equal([1.0, 2.0], dataset.frame["y"].to_numpy())
        np.testing.assert_array_equal([0.0, 1.0], dataset.frame["x"].to_numpy())


class testModelSpec(TestCase):
    def test_from_strings_splits_lists(self):
        spec = ModelSpec.from_strings("Reaction", "Days", "", "Subject")
        self.assertEqual(("Days",), spec.fixed)
        self.assertEqual(tuple(), spec.random)

    def test_needs_a_random_effect(self):
        with self.assertRaises(DataValidationError):
            ModelSpec(response="y", fixed=("x",), random=tuple(), group="g", random_intercept=False)

    def test_roles_must_be_distinct(self):
        with self.assertRaises(DataValidationError):
            ModelSpec(response="g", fixed=("x",), random=tuple(), group="g")
        with self.assertRaises(DataValidationError):
            ModelSpec(response="y", fixed=("y",), random=tuple(), group="g")
        with self.assertRaises(DataValidationError):
            ModelSpec(response="y", fixed=("x", "x"), random=tuple(), group="g")


if __name__ == "__main__":
    main()
