"""Shared fixtures: university schema, query corpora, TPC-H schema."""

UNIVERSITY_DDL = """
create table department (
  dept_name varchar primary key,
  building varchar,
  budget numeric(12,0)
);
create table classroom (
  building varchar,
  room_number varchar,
  capacity numeric(4,0),
  primary key (building, room_number)
);
create table course (
  course_id varchar primary key,
  title varchar,
  dept_name varchar references department (dept_name),
  credits numeric(2,0)
);
create table instructor (
  id varchar primary key,
  name varchar not null,
  dept_name varchar references department (dept_name),
  salary numeric(8,0)
);
create table section (
  course_id varchar,
  sec_id varchar,
  semester varchar,
  year numeric(4,0),
  building varchar,
  room_number varchar,
  time_slot_id varchar,
  primary key (course_id, sec_id, semester, year),
  foreign key (course_id) references course (course_id)
);
create table teaches (
  id varchar,
  course_id varchar,
  sec_id varchar,
  semester varchar,
  year numeric(4,0),
  primary key (id, course_id, sec_id, semester, year),
  foreign key (course_id, sec_id, semester, year)
    references section (course_id, sec_id, semester, year),
  foreign key (id) references instructor (id)
);
create table student (
  id varchar primary key,
  name varchar not null,
  dept_name varchar references department (dept_name),
  tot_cred numeric(3,0)
);
create table takes (
  id varchar,
  course_id varchar,
  sec_id varchar,
  semester varchar,
  year numeric(4,0),
  grade varchar,
  primary key (id, course_id, sec_id, semester, year),
  foreign key (course_id, sec_id, semester, year)
    references section (course_id, sec_id, semester, year),
  foreign key (id) references student (id)
);
create table advisor (
  s_id varchar primary key references student (id),
  i_id varchar references instructor (id)
);
create table prereq (
  course_id varchar,
  prereq_id varchar,
  primary key (course_id, prereq_id),
  foreign key (course_id) references course (course_id),
  foreign key (prereq_id) references course (course_id)
);
"""

SAMPLE_ROWS = {
    "department": [
        {"dept_name": "Biology", "building": "Watson", "budget": "90000"},
        {"dept_name": "Comp. Sci.", "building": "Taylor", "budget": "100000"},
        {"dept_name": "Finance", "building": "Painter", "budget": "120000"},
        {"dept_name": "History", "building": "Painter", "budget": "50000"},
        {"dept_name": "Music", "building": "Packard", "budget": "80000"},
        {"dept_name": "Physics", "building": "Watson", "budget": "70000"},
        {"dept_name": "Elec. Eng.", "building": "Taylor", "budget": "85000"},
    ],
    "course": [
        {"course_id": "BIO-301", "title": "Genetics", "dept_name": "Biology", "credits": "4"},
        {"course_id": "CS-101", "title": "Intro. to Computer Science",
         "dept_name": "Comp. Sci.", "credits": "4"},
        {"course_id": "CS-201", "title": "Data Structures", "dept_name": "Comp. Sci.",
         "credits": "3"},
        {"course_id": "CS-312", "title": "Databases", "dept_name": "Comp. Sci.",
         "credits": "3"},
        {"course_id": "PHY-101", "title": "Physical Principles", "dept_name": "Physics",
         "credits": "4"},
        {"course_id": "MU-199", "title": "Music Video Production", "dept_name": "Music",
         "credits": "3"},
        {"course_id": "HIS-351", "title": "World History", "dept_name": "History",
         "credits": "3"},
        {"course_id": "FIN-201", "title": "Investment Banking", "dept_name": "Finance",
         "credits": "3"},
    ],
    "instructor": [
        {"id": "10101", "name": "Srinivasan", "dept_name": "Comp. Sci.", "salary": "65000"},
        {"id": "12121", "name": "Wu", "dept_name": "Finance", "salary": "90000"},
        {"id": "15151", "name": "Mozart", "dept_name": "Music", "salary": "40000"},
        {"id": "22222", "name": "Einstein", "dept_name": "Physics", "salary": "95000"},
        {"id": "32343", "name": "El Said", "dept_name": "History", "salary": "60000"},
        {"id": "33456", "name": "Gold", "dept_name": "Physics", "salary": "87000"},
        {"id": "45565", "name": "Katz", "dept_name": "Comp. Sci.", "salary": "75000"},
        {"id": "76766", "name": "Crick", "dept_name": "Biology", "salary": "72000"},
    ],
    "student": [
        {"id": "00128", "name": "Zhang", "dept_name": "Comp. Sci.", "tot_cred": "102"},
        {"id": "12345", "name": "Shankar", "dept_name": "Comp. Sci.", "tot_cred": "32"},
        {"id": "19991", "name": "Brandt", "dept_name": "History", "tot_cred": "80"},
        {"id": "23121", "name": "Chavez", "dept_name": "Finance", "tot_cred": "110"},
        {"id": "44553", "name": "Peltier", "dept_name": "Physics", "tot_cred": "56"},
        {"id": "45678", "name": "Levy", "dept_name": "Physics", "tot_cred": "46"},
        {"id": "54321", "name": "Williams", "dept_name": "Comp. Sci.", "tot_cred": "54"},
        {"id": "76543", "name": "Brown", "dept_name": "Comp. Sci.", "tot_cred": "58"},
    ],
    "section": [
        {"course_id": "BIO-301", "sec_id": "1", "semester": "Summer", "year": "2010",
         "building": "Painter", "room_number": "514", "time_slot_id": "A"},
        {"course_id": "CS-101", "sec_id": "1", "semester": "Fall", "year": "2009",
         "building": "Packard", "room_number": "101", "time_slot_id": "H"},
        {"course_id": "CS-101", "sec_id": "1", "semester": "Spring", "year": "2010",
         "building": "Packard", "room_number": "101", "time_slot_id": "F"},
        {"course_id": "CS-201", "sec_id": "1", "semester": "Spring", "year": "2010",
         "building": "Taylor", "room_number": "3128", "time_slot_id": "E"},
        {"course_id": "PHY-101", "sec_id": "1", "semester": "Fall", "year": "2009",
         "building": "Watson", "room_number": "100", "time_slot_id": "A"},
    ],
    "teaches": [
        {"id": "10101", "course_id": "CS-101", "sec_id": "1", "semester": "Fall",
         "year": "2009"},
        {"id": "10101", "course_id": "CS-201", "sec_id": "1", "semester": "Spring",
         "year": "2010"},
        {"id": "22222", "course_id": "PHY-101", "sec_id": "1", "semester": "Fall",
         "year": "2009"},
        {"id": "45565", "course_id": "CS-101", "sec_id": "1", "semester": "Spring",
         "year": "2010"},
        {"id": "76766", "course_id": "BIO-301", "sec_id": "1", "semester": "Summer",
         "year": "2010"},
    ],
    "takes": [
        {"id": "00128", "course_id": "CS-101", "sec_id": "1", "semester": "Fall",
         "year": "2009", "grade": "A"},
        {"id": "12345", "course_id": "CS-101", "sec_id": "1", "semester": "Fall",
         "year": "2009", "grade": "C"},
        {"id": "44553", "course_id": "PHY-101", "sec_id": "1", "semester": "Fall",
         "year": "2009", "grade": "B+"},
        {"id": "54321", "course_id": "CS-101", "sec_id": "1", "semester": "Fall",
         "year": "2009", "grade": "A+"},
        {"id": "76543", "course_id": "CS-101", "sec_id": "1", "semester": "Fall",
         "year": "2009", "grade": "A"},
    ],
    "prereq": [
        {"course_id": "BIO-301", "prereq_id": "PHY-101"},
        {"course_id": "CS-201", "prereq_id": "CS-101"},
        {"course_id": "CS-312", "prereq_id": "CS-201"},
    ],
    "advisor": [],
    "classroom": [
        {"building": "Packard", "room_number": "101", "capacity": "500"},
        {"building": "Painter", "room_number": "514", "capacity": "10"},
        {"building": "Taylor", "room_number": "3128", "capacity": "70"},
        {"building": "Watson", "room_number": "100", "capacity": "30"},
    ],
}


CA_QUERIES = {
    "CA1": """SELECT c.dept_name, SUM(c.credits) FROM course c INNER JOIN department d
              ON (c.dept_name = d.dept_name) GROUP BY c.dept_name
              HAVING SUM(c.credits) > 10 AND COUNT(c.credits) > 1""",
    "CA2": """SELECT c.dept_name, SUM(i.salary) FROM course c INNER JOIN department d
              ON (c.dept_name = d.dept_name) INNER JOIN instructor i
              ON (d.dept_name = i.dept_name) GROUP BY c.dept_name
              HAVING SUM(i.salary) > 100000 AND MAX(i.salary) < 75000""",
    "CA3": """SELECT c.dept_name, SUM(d.budget) FROM course c INNER JOIN department d
              ON (c.dept_name = d.dept_name) INNER JOIN teaches t
              ON (c.course_id = t.course_id) GROUP BY c.dept_name
              HAVING SUM(d.budget) > 100000 AND COUNT(d.budget) > 1""",
    "CA4": """SELECT c.dept_name, AVG(i.salary) FROM course c INNER JOIN department d
              ON (c.dept_name = d.dept_name) INNER JOIN teaches t
              ON (c.course_id = t.course_id) INNER JOIN instructor i
              ON (d.dept_name = i.dept_name) GROUP BY c.dept_name
              HAVING AVG(i.salary) > 50000 AND COUNT(i.salary) = 3""",
    "CA5": """SELECT t.semester, SUM(c.credits) FROM department d INNER JOIN teaches t
              ON (d.budget = t.year + 4) INNER JOIN course c
              ON (c.dept_name = d.dept_name) GROUP BY t.semester
              HAVING AVG(c.credits) > 2 AND COUNT(d.building) = 2""",
    "CA6": """SELECT id FROM course NATURAL JOIN department NATURAL JOIN student
              NATURAL JOIN takes NATURAL JOIN section
              GROUP BY id, dept_name HAVING COUNT(dept_name) > 1""",
    "CA7": """SELECT distinct dept_name FROM course WHERE credits =
              (SELECT MAX(credits) FROM course NATURAL JOIN department
               WHERE title = 'CS' GROUP BY dept_name HAVING COUNT(course_id) > 2)""",
    "CA8": """SELECT id, name FROM
              (SELECT id, time_slot_id, year, semester FROM takes NATURAL JOIN section
               GROUP BY id, time_slot_id, year, semester
               HAVING COUNT(time_slot_id) > 1) as s
              NATURAL JOIN student GROUP BY id, name HAVING COUNT(id) > 1""",
    "CA9": """SELECT SUM(T) as su FROM
              (SELECT year as T FROM teaches NATURAL JOIN instructor
               GROUP BY year, course_id HAVING COUNT(id) > 4) as temp GROUP BY T""",
}

# Per-relation tuple assignments the reference experiment reports (digit multisets).
CA_EXPECTED_TUPLES = {
    "CA1": (1, 2), "CA2": (1, 1, 2), "CA3": (2, 1, 2), "CA4": (3, 3, 1, 3),
    "CA5": (1, 2, 2), "CA6": (1, 2, 1, 2, 2), "CA7": (1, 1, 3), "CA8": (1, 2, 2),
    "CA9": (5, 5),
}

SQ_QUERIES = {
    "SQ1": """SELECT * FROM department d WHERE d.dept_name IN
              (SELECT c.dept_name FROM course c WHERE c.credits > 2)""",
    "SQ2": """SELECT * FROM course c WHERE EXISTS
              (SELECT * FROM department d WHERE c.dept_name = d.dept_name)""",
    "SQ3": """SELECT * FROM takes t WHERE NOT EXISTS
              (SELECT * FROM section WHERE t.year = section.year AND year = 2010)""",
    "SQ4": """SELECT * FROM course c WHERE credits > 3 AND EXISTS
              (SELECT * FROM department d WHERE d.dept_name = c.dept_name)""",
    "SQ5": """SELECT course_id, title FROM course NATURAL JOIN section
              WHERE semester = 'Spring' AND year = 2010 AND course_id IN
              (SELECT course_id FROM prereq WHERE prereq_id = 'CS-201')""",
    "SQ6": """SELECT course_id, title FROM course NATURAL JOIN section
              WHERE semester = 'Spring' AND year = 2010 AND course_id NOT IN
              (SELECT course_id FROM prereq WHERE prereq_id = 'CS-201')""",
    "SQ7": """SELECT name FROM instructor WHERE salary > ALL
              (SELECT salary FROM instructor i2 WHERE dept_name = 'Biology')""",
    "SQ8": """SELECT name FROM instructor WHERE salary >
              (SELECT AVG(salary) FROM instructor i2 WHERE dept_name = 'Physics')""",
    "SQ9": """SELECT * FROM student WHERE tot_cred >
              (SELECT SUM(credits) FROM takes INNER JOIN course USING (course_id)
               WHERE student.id = takes.id)""",
    "SQ10": """SELECT * FROM student WHERE tot_cred < ALL
               (SELECT SUM(credits) FROM takes INNER JOIN course USING (course_id)
                WHERE dept_name = 'History')""",
}

CQ_QUERIES = {
    "CQ1": "SELECT course_id, title FROM course",
    "CQ2": "SELECT course_id, title FROM course WHERE dept_name = 'Comp. Sci.'",
    "CQ3": """SELECT DISTINCT course_id, title, id FROM course NATURAL JOIN teaches
              WHERE teaches.semester = 'Spring' AND teaches.year = '2010'""",
    "CQ4": """SELECT DISTINCT student.id, student.name FROM takes NATURAL JOIN student
              WHERE course_id = 'CS-101'""",
    "CQ5": """SELECT DISTINCT course.dept_name FROM course NATURAL JOIN section
              WHERE section.semester = 'Spring' AND section.year = '2010'""",
    "CQ6": "SELECT course_id, title FROM course WHERE credits > 3",
    "CQ7": """SELECT course_id, COUNT(DISTINCT id) FROM course NATURAL LEFT OUTER JOIN takes
              GROUP BY course_id""",
    "CQ8": """SELECT DISTINCT course_id, title FROM course NATURAL JOIN section
              WHERE semester = 'Spring' AND year = 2010 AND course_id NOT IN
              (SELECT course_id FROM prereq)""",
    "CQ9a": """WITH s as (SELECT id, time_slot_id, year, semester
               FROM takes NATURAL JOIN section
               GROUP BY id, time_slot_id, year, semester HAVING COUNT(time_slot_id) > 1)
               SELECT DISTINCT id, name FROM s NATURAL JOIN student""",
    "CQ9b": """SELECT DISTINCT A.id, A.name FROM
               (SELECT * FROM student NATURAL JOIN takes NATURAL JOIN section) A,
               (SELECT * FROM student NATURAL JOIN takes NATURAL JOIN section) B
               WHERE A.name = B.name AND A.year = B.year
               AND A.course_id <> B.course_id AND A.semester = B.semester
               AND A.time_slot_id = B.time_slot_id""",
    "CQ10": """SELECT DISTINCT dept_name FROM course WHERE credits =
               (SELECT MAX(credits) FROM course c2)""",
    "CQ11": """SELECT DISTINCT instructor.id, name, course_id FROM instructor
               LEFT OUTER JOIN teaches ON instructor.id = teaches.id""",
    "CQ12": """SELECT student.id, student.name FROM student
               WHERE lower(student.name) like '%sr%'""",
    "CQ13": """SELECT id, name FROM student s WHERE NOT EXISTS
               (SELECT * FROM student t NATURAL JOIN takes
                WHERE s.id = t.id AND takes.year = 2010 AND takes.semester = 'Spring')""",
    "CQ14": """SELECT DISTINCT * FROM takes t WHERE
               (NOT EXISTS (SELECT id, course_id FROM takes s
                            WHERE grade != 'F' AND t.id = s.id
                            AND t.course_id = s.course_id)
                AND t.grade IS NOT NULL)
               OR (t.grade != 'F' AND t.grade IS NOT NULL)""",
}


def university_schema(with_samples: bool = True):
    from xkill.catalog import ingest_sample_db, load_schema
    schema = load_schema(UNIVERSITY_DDL)
    if with_samples:
        schema = ingest_sample_db(schema, SAMPLE_ROWS)
    return schema
